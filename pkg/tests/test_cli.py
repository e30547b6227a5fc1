import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from puffnet import cli
from puffnet import experiments as ex
from puffnet.checkpoint import encode_tensors
from puffnet.core.patches import resize_bilinear
from puffnet.data import synthetic_content, synthetic_style
from puffnet.imageio import load_png, quantize, round_to_multiple, save_png
from puffnet.reports import read_report, write_report


@pytest.fixture
def images(tmp_path):
    c = save_png(tmp_path / "c.png", synthetic_content(64))
    s = save_png(tmp_path / "s.png", synthetic_style(64))
    return c, s


def run(argv):
    return cli.main([str(a) for a in argv])


# -- image files -----------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), seed=st.integers(0, 2 ** 31 - 1))
def test_png_round_trip_reproduces_quantized_tensor(tmp_path_factory, h, w, seed):
    img = np.random.default_rng(seed).uniform(-0.2, 1.2, (3, h, w)).astype(np.float32)
    path = save_png(tmp_path_factory.mktemp("png") / "x.png", img)
    assert np.array_equal(quantize(load_png(path)), quantize(img))


def test_quantize_rule():
    img = np.array([-1.0, 0.0, 0.5, 1 / 255 * 0.49, 1.0, 2.0], np.float32).reshape(3, 1, 2)
    assert quantize(img).transpose(2, 0, 1).ravel().tolist() == [0, 0, 128, 0, 255, 255]


def test_round_to_multiple_examples():
    assert round_to_multiple(np.zeros((3, 250, 250), np.float32)).shape == (3, 248, 248)
    assert round_to_multiple(np.zeros((3, 252, 3), np.float32)).shape == (3, 256, 8)
    img = np.random.default_rng(0).random((3, 16, 24)).astype(np.float32)
    assert round_to_multiple(img) is img


def test_report_round_trip(tmp_path):
    path = write_report(tmp_path / "r.tsv", {"seed": 3, "config": {"a": 1}}, ["x", "y"], [[1, 0.5], [2, 0.25]])
    header, cols, rows = read_report(path)
    assert header == {"seed": "3", "config": '{"a": 1}'}
    assert cols == ["x", "y"] and rows == [["1", "0.5"], ["2", "0.25"]]
    with pytest.raises(ValueError):
        write_report(tmp_path / "bad.tsv", {}, ["x"], [[1, 2]])


# -- stylize --------------------------------------------------------------------------------

def test_stylize_256_is_valid_and_byte_identical(tmp_path, capsys):
    c = save_png(tmp_path / "c.png", synthetic_content(256))
    s = save_png(tmp_path / "s.png", synthetic_style(256))
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "a.png"]) == 0
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "b.png"]) == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    with Image.open(tmp_path / "a.png") as im:
        assert im.size == (256, 256) and im.mode == "RGB"
    out = capsys.readouterr().out
    assert "seed=0" in out and "config=" in out


def test_stylize_resizes_to_multiple_of_eight(tmp_path):
    c = save_png(tmp_path / "c.png", resize_bilinear(synthetic_content(256), 250, 250))
    s = save_png(tmp_path / "s.png", synthetic_style(64))
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "o.png"]) == 0
    with Image.open(tmp_path / "o.png") as im:
        assert im.size == (248, 248)


def test_seed_env_overrides_flag(images, tmp_path, monkeypatch, capsys):
    c, s = images
    run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "a.png", "--seed", "5"])
    monkeypatch.setenv("PUFFNET_SEED", "5")
    run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "b.png", "--seed", "1"])
    assert "seed=5" in capsys.readouterr().out.splitlines()[-3:][0]
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    monkeypatch.setenv("PUFFNET_SEED", "x")
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "c.png"]) == 2


def test_exit_codes(images, tmp_path):
    c, s = images
    assert run(["stylize", "--content", tmp_path / "missing.png", "--style", s, "--out", tmp_path / "o.png"]) == 2
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "o.png", "--nope"]) == 2
    assert run(["frobnicate"]) == 2
    bad = tmp_path / "bad.puff"
    bad.write_bytes(b"not a checkpoint")
    assert run(["stylize", "--content", c, "--style", s, "--ckpt", bad, "--out", tmp_path / "o.png"]) == 1
    odd = tmp_path / "odd.puff"
    odd.write_bytes(encode_tensors({"model.stylizer.proj": np.zeros((3, 3), np.float32)}))
    assert run(["stylize", "--content", c, "--style", s, "--ckpt", odd, "--out", tmp_path / "o.png"]) == 1
    assert run(["train", "--iters", "3", "--crop", "30", "--ckpt-out", tmp_path / "m.puff"]) == 2


def test_train_then_stylize_with_checkpoint(images, tmp_path):
    c, s = images
    ck = tmp_path / "m.puff"
    assert run(["train", "--iters", "3", "--crop", "32", "--ckpt-out", ck, "--report", tmp_path / "t.tsv"]) == 0
    header, cols, rows = read_report(tmp_path / "t.tsv")
    assert len(rows) == 3 and cols[-1] == "total" and "model" in header
    assert run(["stylize", "--content", c, "--style", s, "--ckpt", ck, "--out", tmp_path / "a.png"]) == 0
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "b.png"]) == 0
    assert (tmp_path / "a.png").read_bytes() != (tmp_path / "b.png").read_bytes()
    assert run(["train", "--iters", "5", "--crop", "32", "--resume", ck, "--ckpt-out", ck]) == 0


# -- eval ----------------------------------------------------------------------------------------

def test_eval_identity_stub_and_means(images, tmp_path):
    c, s = images
    pairs = [(c, c), (s, s), (c, s)]
    res = ex.run_eval(pairs, lambda content, style: content, tmp_path / "e.tsv")
    header, cols, rows = read_report(tmp_path / "e.tsv")
    assert len(rows) == len(pairs)
    assert float(rows[0][3]) == 0 and float(rows[0][4]) == 0
    assert float(rows[1][3]) == 0 and float(rows[1][4]) == 0
    assert float(header["mean_L_c"]) == pytest.approx(np.mean([float(r[3]) for r in rows]), abs=1e-6)
    assert float(header["mean_L_s"]) == pytest.approx(np.mean([float(r[4]) for r in rows]), abs=1e-6)
    assert res["mean_L_s"] > 0


def test_eval_command_reads_manifest(images, tmp_path):
    c, s = images
    manifest = tmp_path / "pairs.tsv"
    manifest.write_text(f"{c.name}\t{s.name}\n{s}\t{c}\n")
    assert run(["eval", "--pairs", manifest, "--out", tmp_path / "e.tsv"]) == 0
    assert len(read_report(tmp_path / "e.tsv")[2]) == 2
    manifest.write_text(f"{c}\t{tmp_path / 'gone.png'}\n")
    assert run(["eval", "--pairs", manifest, "--out", tmp_path / "e.tsv"]) == 2
    manifest.write_text(f"{c} {s}\n")
    assert run(["eval", "--pairs", manifest, "--out", tmp_path / "e.tsv"]) == 2


# -- bench ---------------------------------------------------------------------------------------

def test_bench_counts_are_exact_and_reproducible(tmp_path):
    args = ["bench", "--L", "16,64", "--C", "32", "--res", "32", "--out", tmp_path / "a.tsv"]
    assert run(args) == 0
    first = (tmp_path / "a.tsv").read_bytes()
    assert run(args) == 0
    assert (tmp_path / "a.tsv").read_bytes() == first
    _, cols, rows = read_report(tmp_path / "a.tsv")
    for r in map(dict, (zip(cols, row) for row in rows)):
        assert int(r["cross_quad_measured"]) == 2 * int(r["L"]) ** 2 * int(r["C"])
        assert float(r["quad_ratio"]) == 4.0 and r["exact"] == "1"
    assert len(read_report(tmp_path / "a_timing.tsv")[2]) == 1
    assert run(["bench", "--C", "33", "--out", tmp_path / "c.tsv"]) == 2
    assert run(["bench", "--L", "0", "--out", tmp_path / "c.tsv"]) == 2


# -- ablations and rounds -------------------------------------------------------------------------

def test_ablate_init_emits_per_mode_files_deterministically(tmp_path):
    args = ["ablate-init", "--steps", "2", "--size", "32", "--out", tmp_path / "a"]
    assert run(args) == 0
    first = {m: (tmp_path / "a" / f"init_{m}.tsv").read_bytes() for m in ex.INIT_MODES}
    assert run(args) == 0
    for mode in ex.INIT_MODES:
        assert (tmp_path / "a" / f"init_{mode}.tsv").read_bytes() == first[mode]
        assert len(list((tmp_path / "a" / f"init_{mode}").glob("*.png"))) == 3
    _, _, rows = read_report(tmp_path / "a" / "ablate_init.tsv")
    assert [r[0] for r in rows] == list(ex.INIT_MODES)
    assert run(["ablate-init", "--modes", "content,bogus", "--out", tmp_path / "c"]) == 2


def test_ablate_pe_positional_content_dependence(tmp_path):
    res = ex.run_ablate_pe(["cape", "sinusoidal"], tmp_path, steps=2, size=32)
    assert res["files"]["cape"]["steps"] == res["files"]["sinusoidal"]["steps"] == 2
    summary = {r[0]: r for r in res["summary"]}
    assert summary["cape"][4] > 0 and summary["sinusoidal"][4] == 0
    assert all(np.isfinite(r[3]) for r in res["summary"])


def test_rounds_first_round_matches_stylize(images, tmp_path):
    c, s = images
    assert run(["stylize", "--content", c, "--style", s, "--out", tmp_path / "one.png"]) == 0
    assert run(["rounds", "--n", "3", "--content", c, "--style", s, "--out", tmp_path / "r"]) == 0
    assert (tmp_path / "r" / "round_01.png").read_bytes() == (tmp_path / "one.png").read_bytes()
    _, _, rows = read_report(tmp_path / "r" / "rounds.tsv")
    assert len(rows) == 3 and all(np.isfinite(float(r[1])) for r in rows)
    assert run(["rounds", "--n", "0", "--content", c, "--style", s, "--out", tmp_path / "r"]) == 2
