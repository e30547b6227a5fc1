"""``puffnet`` command-line tool.

Exit codes: 0 on success, 2 on invalid arguments or inputs, 1 on runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from .checkpoint import CheckpointError
from .data import DirectoryPairs, FixedPair, synthetic_content, synthetic_style
from .model import ModelConfig
from .reports import write_report
from .trainer import Trainer, TrainConfig

log = logging.getLogger("puffnet")


class UsageError(Exception):
    """Bad input detected before any work starts."""


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _str_list(text: str) -> list[str]:
    return [v for v in text.split(",") if v]


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--pe", choices=ex.PE_KINDS, default="cape")
    p.add_argument("--out-embed", choices=ex.INIT_MODES, default="content")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puffnet", description="Desk-scale style transfer toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0, help="overridden by PUFFNET_SEED")
        return p

    p = add("train", "train a model")
    p.add_argument("--content-dir")
    p.add_argument("--style-dir")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--resume")
    p.add_argument("--ckpt-out", required=True)
    p.add_argument("--report")
    _model_flags(p)

    p = add("stylize", "stylize one content image with one style image")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--out", required=True)

    p = add("eval", "content/style distances over a manifest of pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--out", required=True)

    p = add("bench", "attention MAC accounting and stylize timings")
    p.add_argument("--L", dest="lengths", type=_int_list, default=[16, 64, 256])
    p.add_argument("--C", dest="dims", type=_int_list, default=[32, 192])
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--res", type=_int_list, default=[64, 128])
    p.add_argument("--out", required=True)

    p = add("ablate-init", "compare output-embedding initialisations")
    p.add_argument("--modes", type=_str_list, default=list(ex.INIT_MODES))
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--content")
    p.add_argument("--style")
    p.add_argument("--out", required=True)

    p = add("ablate-pe", "compare content-aware and sinusoidal positional encodings")
    p.add_argument("--pe", type=_str_list, default=list(ex.PE_KINDS))
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--content")
    p.add_argument("--style")
    p.add_argument("--out", required=True)

    p = add("rounds", "stylize repeatedly, feeding each output back as content")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--out", required=True)
    return parser


def resolve_seed(args) -> int:
    env = os.environ.get("PUFFNET_SEED")
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PUFFNET_SEED must be an integer, got {env!r}") from None


def _need_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"no such file: {p}")


def _echo(args, seed: int) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    config["seed"] = seed
    print(f"seed={seed}")
    print(f"config={json.dumps(config, sort_keys=True, default=str)}")
    return {"command": args.command, "seed": seed, "config": config}


def _model(args, seed: int):
    if getattr(args, "ckpt", None):
        return ex.get_model(args.ckpt)
    return ex.get_model(seed=seed)


def cmd_train(args, seed, header):
    if bool(args.content_dir) != bool(args.style_dir):
        raise UsageError("--content-dir and --style-dir must be given together")
    try:
        cfg = TrainConfig(total_iters=args.iters, base_lr=args.lr, crop=args.crop, seed=seed,
                          content_dir=args.content_dir, style_dir=args.style_dir,
                          checkpoint_every=args.checkpoint_every, checkpoint_path=args.ckpt_out)
        mc = ModelConfig(dim=args.dim, heads=args.heads, layers=args.layers, pe=args.pe,
                         out_embed_mode=args.out_embed, seed=seed)
        if mc.dim % mc.heads:
            raise ValueError(f"--heads {mc.heads} does not divide --dim {mc.dim}")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.content_dir:
        data = DirectoryPairs(args.content_dir, args.style_dir, args.crop, seed)
    else:
        data = FixedPair(synthetic_content(args.crop, seed), synthetic_style(args.crop, seed))
    if args.resume:
        _need_files(args.resume)
        tr = Trainer.resume(args.resume, cfg, data)
    else:
        tr = Trainer(cfg, data, model_config=mc)
    tr.run()
    tr.save(args.ckpt_out)
    if args.report:
        rows = [[t, *(h[k] for k in ("content", "style", "extractor", "identity_pixel",
                                     "identity_feature", "total"))]
                for t, h in enumerate(tr.history, tr.iteration - len(tr.history) + 1)]
        write_report(args.report, {**header, "model": tr.model.config.to_dict()},
                     ["step", "content", "style", "extractor", "identity_pixel", "identity_feature", "total"],
                     rows)
    print(f"trained to step {tr.iteration}; checkpoint {args.ckpt_out}")


def cmd_stylize(args, seed, header):
    _need_files(args.content, args.style, args.ckpt)
    path = ex.run_stylize(args.content, args.style, args.out, _model(args, seed))
    print(f"wrote {path}")


def cmd_eval(args, seed, header):
    _need_files(args.pairs, args.ckpt)
    try:
        pairs = ex.read_manifest(args.pairs)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from None
    model = _model(args, seed)
    res = ex.run_eval(pairs, lambda c, s: ex.stylize_arrays(c, s, model), args.out, header=header)
    print(f"mean L_c={res['mean_L_c']:.6g} mean L_s={res['mean_L_s']:.6g}; wrote {args.out}")


def cmd_bench(args, seed, header):
    for d in args.dims:
        if d % args.heads:
            raise UsageError(f"--heads {args.heads} does not divide C={d}")
    res = ex.run_bench(args.lengths, args.dims, args.out, args.heads, seed, tuple(args.res), header)
    bad = [r for r in res["rows"] if not r[-1]]
    print(f"wrote {args.out} and {res['timing_path']}")
    if bad:
        raise RuntimeError(f"measured MACs disagree with the closed form for {len(bad)} rows")


def cmd_ablate_init(args, seed, header):
    _need_files(args.content, args.style)
    try:
        res = ex.run_ablate_init(args.modes, args.out, args.steps, args.size, seed, args.lr,
                                 args.content, args.style, header)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"wrote {res['report']}")


def cmd_ablate_pe(args, seed, header):
    _need_files(args.content, args.style)
    try:
        res = ex.run_ablate_pe(args.pe, args.out, args.steps, args.size, seed, args.lr,
                               args.content, args.style, header)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"wrote {res['report']}")


def cmd_rounds(args, seed, header):
    _need_files(args.content, args.style, args.ckpt)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    res = ex.run_rounds(args.n, args.content, args.style, args.out, _model(args, seed), header=header)
    print(f"wrote {len(res['images'])} images and {res['report']}")


COMMANDS = {"train": cmd_train, "stylize": cmd_stylize, "eval": cmd_eval, "bench": cmd_bench,
            "ablate-init": cmd_ablate_init, "ablate-pe": cmd_ablate_pe, "rounds": cmd_rounds}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        seed = resolve_seed(args)
        header = _echo(args, seed)
        COMMANDS[args.command](args, seed, header)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, OSError, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
