"""Experiment runners behind the command-line tool.

Each runner takes plain arguments, writes its files and returns what it wrote,
so tests can drive them without going through argv.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .checkpoint import load_model
from .core import Rng, Tensor, count_macs, no_grad
from .data import FixedPair, synthetic_content, synthetic_style
from .imageio import as_batch, load_png, round_to_multiple, save_png
from .losses import PerceptualNet, content_loss, style_loss
from .model import ModelConfig, PuffNetModel, stylize
from .reports import write_report
from .stylizer import EncoderLayer, attention, attention_cost, concat_self_attention
from .trainer import Trainer, TrainConfig

INIT_MODES = ("content", "style", "zero", "random")
PE_KINDS = ("cape", "sinusoidal")


def get_model(ckpt=None, seed: int = 0, config: ModelConfig | None = None) -> PuffNetModel:
    """Load a checkpoint, or build a fresh seeded model when none is given."""
    if ckpt is not None:
        return load_model(ckpt)[0]
    return PuffNetModel(config or ModelConfig(seed=seed))


def load_input(path) -> np.ndarray:
    return round_to_multiple(load_png(path), 8)


def stylize_arrays(content: np.ndarray, style: np.ndarray, model: PuffNetModel) -> np.ndarray:
    with no_grad():
        return stylize(as_batch(content), as_batch(style), model).data[0]


def run_stylize(content_path, style_path, out_path, model: PuffNetModel) -> Path:
    out = stylize_arrays(load_input(content_path), load_input(style_path), model)
    return save_png(out_path, out)


# -- eval -----------------------------------------------------------------------------

def read_manifest(path) -> list[tuple[Path, Path]]:
    base = Path(path).parent
    pairs = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) != 2:
            raise ValueError(f"manifest line {n}: expected 'content<TAB>style', got {line!r}")
        c, s = (Path(x) if Path(x).is_absolute() else base / x for x in cells)
        for p in (c, s):
            if not p.is_file():
                raise FileNotFoundError(f"manifest line {n}: no such file {p}")
        pairs.append((c, s))
    return pairs


def run_eval(pairs: list[tuple[Path, Path]], stylize_fn, out_path, net: PerceptualNet | None = None,
             header: dict | None = None) -> dict:
    """Per-pair content and style distances of ``stylize_fn(content, style)`` to its inputs."""
    net = net or PerceptualNet()
    rows = []
    with no_grad():
        for i, (cp, sp) in enumerate(pairs):
            c, s = load_input(cp), load_input(sp)
            out = as_batch(stylize_fn(c, s))
            lc = content_loss(out, as_batch(c), net).item()
            ls = style_loss(out, as_batch(s), net).item()
            rows.append([i, str(cp), str(sp), lc, ls])
    mean_c = float(np.mean([r[3] for r in rows])) if rows else float("nan")
    mean_s = float(np.mean([r[4] for r in rows])) if rows else float("nan")
    head = {**(header or {}), "pairs": len(rows), "mean_L_c": mean_c, "mean_L_s": mean_s}
    write_report(out_path, head, ["index", "content", "style", "L_c", "L_s"], rows)
    return {"rows": rows, "mean_L_c": mean_c, "mean_L_s": mean_s}


# -- bench ---------------------------------------------------------------------------------

def measure_attention_macs(length: int, dim: int, heads: int, seed: int) -> dict[str, dict[str, int]]:
    rng = Rng(seed).child("bench").child(length).child(dim)
    layer = EncoderLayer(rng.child("layer"), dim, heads)
    stream = Tensor(rng.child("c").normal((1, length, dim)))
    eps_s = Tensor(rng.child("s").normal((1, length, dim)))
    pos = Tensor(np.zeros((1, length, dim)))
    out = {}
    with no_grad():
        for mode, fn in (("cross", lambda: attention(stream, eps_s, layer, pos)),
                         ("concat_self", lambda: concat_self_attention(stream, eps_s, layer))):
            with count_macs() as c:
                fn()
            out[mode] = {"quadratic": c["score"] + c["value"],
                         "projections": c["proj"], "total": c.total}
    return out


def time_stylize(size: int, model: PuffNetModel, repeats: int = 3) -> float:
    c = synthetic_content(size)
    s = synthetic_style(size)
    stylize_arrays(c, s, model)  # warm the operator caches
    start = time.perf_counter()
    for _ in range(repeats):
        stylize_arrays(c, s, model)
    return (time.perf_counter() - start) / repeats


def run_bench(lengths: list[int], dims: list[int], out_path, heads: int = 2, seed: int = 0,
              resolutions: tuple[int, ...] = (64, 128), header: dict | None = None) -> dict:
    cols = ["L", "C", "cross_quad_formula", "cross_quad_measured", "cross_total_formula",
            "cross_total_measured", "concat_quad_formula", "concat_quad_measured",
            "concat_total_formula", "concat_total_measured", "quad_ratio", "exact"]
    rows = []
    for length in lengths:
        for dim in dims:
            meas = measure_attention_macs(length, dim, heads, seed)
            fc, fs = attention_cost(length, dim, "cross"), attention_cost(length, dim, "concat_self")
            exact = all(meas[m][k] == f[k] for m, f in (("cross", fc), ("concat_self", fs))
                        for k in ("quadratic", "total"))
            rows.append([length, dim, fc["quadratic"], meas["cross"]["quadratic"], fc["total"],
                         meas["cross"]["total"], fs["quadratic"], meas["concat_self"]["quadratic"],
                         fs["total"], meas["concat_self"]["total"],
                         meas["concat_self"]["quadratic"] / meas["cross"]["quadratic"], int(exact)])
    head = {**(header or {}), "heads": heads}
    write_report(out_path, head, cols, rows)

    model = PuffNetModel(ModelConfig(seed=seed))
    timing = [[r, time_stylize(r, model)] for r in resolutions]
    timing_path = Path(out_path).with_name(Path(out_path).stem + "_timing.tsv")
    write_report(timing_path, head, ["resolution", "seconds"], timing)
    return {"rows": rows, "columns": cols, "timing": timing, "timing_path": timing_path}


# -- short training runs shared by the ablations ---------------------------------------------

def _pair(size: int, seed: int, content=None, style=None):
    if content is not None and style is not None:
        return load_input(content), load_input(style)
    return synthetic_content(size, seed), synthetic_style(size, seed)


def _train_variant(config: ModelConfig, steps: int, size: int, seed: int, pair, lr: float):
    cfg = TrainConfig(total_iters=steps, crop=size, seed=seed, base_lr=lr)
    tr = Trainer(cfg, FixedPair(*pair), model=PuffNetModel(config))
    tr.run()
    return tr


def _save_image_set(directory: Path, model: PuffNetModel, pair) -> list[Path]:
    c, s = pair
    return [save_png(directory / "output.png", stylize_arrays(c, s, model)),
            save_png(directory / "recon_content.png", stylize_arrays(c, c, model)),
            save_png(directory / "recon_style.png", stylize_arrays(s, s, model))]


def _curve_rows(history):
    return [[t, h["content"], h["style"], h["total"]] for t, h in enumerate(history, 1)]


def run_ablate_init(modes, out_dir, steps: int = 20, size: int = 32, seed: int = 0, lr: float = 5e-4,
                    content=None, style=None, header: dict | None = None) -> dict:
    for m in modes:
        if m not in INIT_MODES:
            raise ValueError(f"unknown output-embedding mode {m!r} (choose from {', '.join(INIT_MODES)})")
    out_dir = Path(out_dir)
    pair = _pair(size, seed, content, style)
    summary = []
    files = {}
    for mode in modes:
        config = ModelConfig(seed=seed, out_embed_mode=mode)
        trace = {}
        with no_grad():
            stylize(as_batch(pair[0]), as_batch(pair[1]), PuffNetModel(config), trace=trace)
        if mode == "content" and not np.array_equal(trace["eps_o"], trace["eps_c"]):
            raise RuntimeError("content-initialised output embedding differs from the content tokens")
        tr = _train_variant(config, steps, size, seed, pair, lr)
        head = {**(header or {}), "mode": mode, "model": config.to_dict(), "train": tr.cfg.to_dict()}
        curve = write_report(out_dir / f"init_{mode}.tsv", head, ["step", "L_c", "L_s", "total"],
                             _curve_rows(tr.history))
        images = _save_image_set(out_dir / f"init_{mode}", tr.model, pair)
        files[mode] = {"curve": curve, "images": images}
        last = tr.history[-1]
        summary.append([mode, last["content"], last["style"], last["total"]])
    report = write_report(out_dir / "ablate_init.tsv", {**(header or {}), "steps": steps, "size": size},
                          ["mode", "final_L_c", "final_L_s", "final_total"], summary)
    return {"report": report, "files": files, "summary": summary}


def positional_difference(model: PuffNetModel, size: int, seed: int) -> float:
    """Largest change in the positional tensor between two distinct content images."""
    st = model.stylizer
    from .core.patches import patchify
    from .extractors import extract_content

    pos = []
    with no_grad():
        for k in (seed, seed + 1):
            pure = extract_content(as_batch(synthetic_content(size, k)), model.content)
            pos.append(st.positions(patchify(pure, st.patch, st.proj)).data)
    return float(np.abs(pos[0] - pos[1]).max())


def run_ablate_pe(kinds, out_dir, steps: int = 20, size: int = 32, seed: int = 0, lr: float = 5e-4,
                  content=None, style=None, header: dict | None = None) -> dict:
    for k in kinds:
        if k not in PE_KINDS:
            raise ValueError(f"unknown positional encoding {k!r} (choose from {', '.join(PE_KINDS)})")
    out_dir = Path(out_dir)
    pair = _pair(size, seed, content, style)
    summary = []
    files = {}
    for kind in kinds:
        config = ModelConfig(seed=seed, pe=kind)
        tr = _train_variant(config, steps, size, seed, pair, lr)
        head = {**(header or {}), "pe": kind, "model": config.to_dict(), "train": tr.cfg.to_dict()}
        curve = write_report(out_dir / f"pe_{kind}.tsv", head, ["step", "L_c", "L_s", "total"],
                             _curve_rows(tr.history))
        images = _save_image_set(out_dir / f"pe_{kind}", tr.model, pair)
        files[kind] = {"curve": curve, "images": images, "steps": len(tr.history)}
        last = tr.history[-1]
        summary.append([kind, last["content"], last["style"], last["total"],
                        positional_difference(tr.model, size, seed)])
    report = write_report(out_dir / "ablate_pe.tsv", {**(header or {}), "steps": steps, "size": size},
                          ["pe", "final_L_c", "final_L_s", "final_total", "pos_diff"], summary)
    return {"report": report, "files": files, "summary": summary}


# -- repeated stylization -----------------------------------------------------------------------

def run_rounds(n: int, content_path, style_path, out_dir, model: PuffNetModel,
               net: PerceptualNet | None = None, header: dict | None = None) -> dict:
    """Feed each quantized output back in as content; log the drift from the original content."""
    if n < 1:
        raise ValueError(f"rounds must be at least 1, got {n}")
    net = net or PerceptualNet()
    out_dir = Path(out_dir)
    original = load_input(content_path)
    style = load_input(style_path)
    current = content_path
    paths, rows = [], []
    for k in range(1, n + 1):
        path = run_stylize(current, style_path, out_dir / f"round_{k:02d}.png", model)
        out = load_input(path)
        with no_grad():
            lc = content_loss(as_batch(out), as_batch(original), net).item() \
                if out.shape == original.shape else float("nan")
        rows.append([k, lc])
        paths.append(path)
        current = path
    report = write_report(out_dir / "rounds.tsv", {**(header or {}), "rounds": n,
                                                    "style_shape": list(style.shape)},
                          ["round", "L_c"], rows)
    return {"images": paths, "L_c": [r[1] for r in rows], "report": report}
