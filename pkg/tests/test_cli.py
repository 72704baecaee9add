import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from histocolor.cli import main
from histocolor.histogram import HistogramParams, compute_histogram, read_hgf
from histocolor.imageio import read_image, write_image

DATA = Path(__file__).parent / "data"
FAST = ["--iters", "8", "--blur-sigma", "2"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("cmd", ["hist", "recolor", "auto", "eval", "pool"])
def test_help_lists_defaults(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        main([cmd, "--help"])
    assert e.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    assert "default: 64" in text and "default: 0.02" in text
    if cmd in ("recolor", "auto"):
        assert "default: 2.0" in text and "default: 15.0" in text and "default: 1.5" in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "histocolor", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "histocolor" in res.stdout


@pytest.mark.parametrize(
    "argv",
    [
        ["hist", "x.png", "--no-such-flag"],
        ["recolor", "x.png"],
        ["hist", "x.png", "--bins", "one"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 1


def test_invalid_values_exit_1_before_writing(tmp_path, capsys):
    out = tmp_path / "o.png"
    code, _, err = run(["recolor", DATA / "small_a.png", "--target", DATA / "small_b.png", "--out", out,
                        "--alpha", "-1"], capsys)
    assert code == 1 and "alpha" in err and not out.exists()
    code, _, _ = run(["hist", DATA / "small_a.png", "--tau", "0", "--out", tmp_path / "h.hgf"], capsys)
    assert code == 1 and not (tmp_path / "h.hgf").exists()


def test_hist_outputs(tmp_path, capsys):
    code, out, _ = run(["hist", DATA / "small_a.png", "--out", tmp_path / "a.hgf", "--plot", tmp_path / "a.png"], capsys)
    assert code == 0 and "sum(H) = 1.0000000000" in out
    hist = read_hgf(tmp_path / "a.hgf")
    ref = compute_histogram(read_image(DATA / "small_a.png"))
    np.testing.assert_allclose(hist, ref, atol=1e-7)
    assert (tmp_path / "a.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    first = (tmp_path / "a.hgf").read_bytes()
    run(["hist", DATA / "small_a.png", "--out", tmp_path / "a.hgf"], capsys)
    assert (tmp_path / "a.hgf").read_bytes() == first


def test_hist_gray_plot_spot(tmp_path, capsys):
    from histocolor.plotting import histogram_rgb

    write_image(tmp_path / "gray.png", np.full((8, 8, 3), 0.5))
    code, _, _ = run(["hist", tmp_path / "gray.png", "--bins", "63", "--out", tmp_path / "g.hgf",
                      "--plot", tmp_path / "g.png"], capsys)
    assert code == 0
    comp = histogram_rgb(read_hgf(tmp_path / "g.hgf"))
    assert np.unravel_index(np.argmax(comp[:, :, 0]), comp.shape[:2]) == (31, 31)


def test_hist_errors(tmp_path, capsys):
    code, _, err = run(["hist", tmp_path / "missing.png"], capsys)
    assert code == 2 and "missing.png" in err
    write_image(tmp_path / "black.png", np.zeros((4, 4, 3)))
    code, _, err = run(["hist", tmp_path / "black.png"], capsys)
    assert code == 3 and "degenerate" in err


def test_recolor_identity_target(tmp_path, capsys):
    out = tmp_path / "o.png"
    code, text, _ = run(["recolor", DATA / "small_a.png", "--target", DATA / "small_a.png", "--out", out] + FAST,
                        capsys)
    assert code == 0
    final = float(text.split("final Hellinger:")[1].split()[0])
    assert final < 1e-3
    assert np.mean(np.abs(read_image(out) - read_image(DATA / "small_a.png"))) < 0.01


def test_recolor_trace_and_hgf_target(tmp_path, capsys):
    run(["hist", DATA / "small_b.png", "--out", tmp_path / "b.hgf"], capsys)
    code, text, _ = run(["recolor", DATA / "small_a.png", "--target", tmp_path / "b.hgf", "--out",
                         tmp_path / "o.png", "--trace", tmp_path / "t.csv", "--kernel", "sobel"] + FAST, capsys)
    assert code == 0 and "initial Hellinger" in text
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,total,hist_term,recon_term,variance_term,hellinger_raw,w")
    assert (tmp_path / "t.png").exists()


def test_recolor_bin_mismatch_and_gray(tmp_path, capsys):
    run(["hist", DATA / "small_b.png", "--bins", "16", "--out", tmp_path / "b.hgf"], capsys)
    code, _, _ = run(["recolor", DATA / "small_a.png", "--target", tmp_path / "b.hgf", "--out", tmp_path / "o.png"],
                     capsys)
    assert code == 1 and not (tmp_path / "o.png").exists()
    import cv2

    cv2.imwrite(str(tmp_path / "gray.png"), np.full((8, 8), 128, np.uint8))
    code, _, err = run(["recolor", tmp_path / "gray.png", "--target", DATA / "small_a.png", "--out",
                        tmp_path / "o.png"], capsys)
    assert code == 2 and "grayscale" in err and not (tmp_path / "o.png").exists()


def test_recolor_hires_mapping(tmp_path, capsys):
    big = np.clip(np.random.default_rng(0).uniform(0, 1, (260, 262, 3)), 0, 1)
    write_image(tmp_path / "big.png", big)
    code, _, _ = run(["recolor", tmp_path / "big.png", "--target", DATA / "small_b.png", "--out", tmp_path / "o.png",
                      "--hires", "--mapping", tmp_path / "m.json", "--iters", "2"], capsys)
    assert code == 0
    assert read_image(tmp_path / "o.png").shape == (260, 262, 3)
    assert json.loads((tmp_path / "m.json").read_text())["kind"] == "global_poly"


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bins": 16, "tau": 0.1}))
    code, _, _ = run(["--config", cfg, "hist", DATA / "small_a.png", "--out", tmp_path / "a.hgf"], capsys)
    assert code == 0 and read_hgf(tmp_path / "a.hgf").shape == (16, 16, 3)
    # explicit flags win over the file
    run(["--config", cfg, "hist", DATA / "small_a.png", "--bins", "8", "--out", tmp_path / "b.hgf"], capsys)
    assert read_hgf(tmp_path / "b.hgf").shape == (8, 8, 3)
    cfg.write_text(json.dumps({"alpha": 3}))
    with pytest.raises(SystemExit) as e:
        main(["--config", str(cfg), "hist", str(DATA / "small_a.png")])
    assert e.value.code == 1


def draw_oracle(seed, n_pool, k):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        i, j = rng.choice(n_pool, size=2, replace=False)
        out.append((int(i), int(j), float(rng.uniform(0.0, 1.0))))
    return out


def make_pool(tmp_path):
    pool = tmp_path / "pool"
    pool.mkdir()
    for name in ("small_a.png", "small_b.png", "small_c.png"):
        (pool / name).write_bytes((DATA / name).read_bytes())
    return pool


def test_auto_five_variants(tmp_path, capsys):
    pool = make_pool(tmp_path)
    code, _, _ = run(["auto", DATA / "small_a.png", "--pool", pool, "--count", "5", "--seed", "11",
                      "--outdir", tmp_path / "out"] + FAST, capsys)
    assert code == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    variants = manifest["variants"]
    assert len(variants) == 5 and all(v["status"] == "ok" for v in variants)
    for v in variants:
        assert (tmp_path / "out" / v["file"]).exists()
    ids = manifest["pool_ids"]
    expected = [(ids[i], ids[j], d) for i, j, d in draw_oracle(11, 3, 5)]
    got = [(v["first"], v["second"], v["delta"]) for v in variants]
    assert got == expected
    assert len(set(got)) == 5
    # pairs.csv feeds straight into eval
    code, _, _ = run(["eval", "--pairs", tmp_path / "out" / "pairs.csv", "--out", tmp_path / "rep.csv"], capsys)
    assert code == 0


def test_auto_gray_pool_pulls_to_neutral(tmp_path, capsys):
    pool = tmp_path / "pool"
    pool.mkdir()
    write_image(pool / "gray.png", np.full((8, 8, 3), 0.5))
    code, _, _ = run(["auto", DATA / "small_a.png", "--pool", pool, "--count", "1", "--outdir", tmp_path / "out",
                      "--iters", "60", "--blur-sigma", "2"], capsys)
    assert code == 0
    v = json.loads((tmp_path / "out" / "manifest.json").read_text())["variants"][0]
    assert v["second"] is None and v["delta"] == 1.0
    assert v["hellinger_final"] < v["hellinger_initial"]
    src = read_image(DATA / "small_a.png")
    out = read_image(tmp_path / "out" / v["file"])

    def neutral_fraction(img):
        return float(np.mean(img.max(axis=2) - img.min(axis=2) < 0.05))

    assert neutral_fraction(out) > neutral_fraction(src)
    origin = (31, 31)
    assert compute_histogram(out)[origin].sum() > compute_histogram(src)[origin].sum()


def test_auto_empty_pool(tmp_path, capsys):
    (tmp_path / "pool").mkdir()
    code, _, err = run(["auto", DATA / "small_a.png", "--pool", tmp_path / "pool", "--outdir", tmp_path / "o"], capsys)
    assert code == 2 and "no usable" in err


def test_eval_golden(tmp_path, capsys):
    code, _, _ = run(["eval", "--pairs", DATA / "eval_pairs.csv", "--out", tmp_path / "rep.csv"], capsys)
    assert code == 0
    assert (tmp_path / "rep.csv").read_text() == (DATA / "golden_eval.csv").read_text()
    assert json.loads((tmp_path / "rep.json").read_text())["failed"] == 0
    assert (tmp_path / "rep.png").exists()


def test_eval_identical_and_bad_path(tmp_path, capsys):
    (tmp_path / "same.csv").write_text(f"output,target\n{DATA / 'small_a.png'},{DATA / 'small_a.png'}\n")
    code, out, _ = run(["eval", "--pairs", tmp_path / "same.csv", "--out", tmp_path / "r.csv"], capsys)
    assert code == 0 and "mean hellinger_uv: 0.000000" in out
    (tmp_path / "bad.csv").write_text(
        f"output,target\n{DATA / 'small_a.png'},{DATA / 'small_b.png'}\nnope.png,{DATA / 'small_b.png'}\n")
    code, _, err = run(["eval", "--pairs", tmp_path / "bad.csv", "--out", tmp_path / "r2.csv"], capsys)
    assert code != 0 and "nope.png" in err
    assert "error:" in (tmp_path / "r2.csv").read_text()
    (tmp_path / "empty.csv").write_text("output,target\n")
    code, _, err = run(["eval", "--pairs", tmp_path / "empty.csv", "--out", tmp_path / "r3.csv"], capsys)
    assert code == 1 and "empty evaluation set" in err


def test_pool_command(tmp_path, capsys):
    pool_src = make_pool(tmp_path)
    code, out, _ = run(["pool", pool_src, "--out", tmp_path / "saved", "--seed", "4"], capsys)
    assert code == 0 and "saved 3" in out
    manifest = json.loads((tmp_path / "saved" / "manifest.json").read_text())
    assert manifest["seed"] == 4 and len(manifest["entries"]) == 3
    code, _, _ = run(["auto", DATA / "small_a.png", "--pool", tmp_path / "saved", "--count", "2",
                      "--outdir", tmp_path / "out"] + FAST, capsys)
    assert code == 0


def test_failed_write_leaves_no_partial(tmp_path, capsys, monkeypatch):
    import histocolor.imageio as io_mod

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(io_mod.os, "replace", boom)
    code, _, err = run(["hist", DATA / "small_a.png", "--out", tmp_path / "a.hgf"], capsys)
    assert code == 2 and "disk full" in err
    assert list(tmp_path.iterdir()) == []
