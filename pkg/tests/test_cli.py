import shutil

import numpy as np
import pytest
from PIL import Image

from photocal.cli import main
from photocal.dataset_io import load_sequence, read_estimates, write_estimates
from photocal.models import InverseResponse, VignetteModel
from photocal.simulator import SimConfig, end_to_end_check, make_ground_truth, render_sequence


def metrics(stdout):
    out = {}
    for line in stdout.splitlines():
        key, *vals = line.split("\t")
        if key != "exposure_rel_err":
            out[key] = float(vals[0])
    return out


@pytest.fixture(scope="module")
def calibrated(small_dataset, tmp_path_factory):
    root, cfg, gt, seq = small_dataset
    out = tmp_path_factory.mktemp("calib")
    assert main(["calibrate", str(root), "--matches", "files", "-o", str(out / "a")]) == 0
    return root, cfg, gt, out / "a"


def test_calibrate_writes_estimates(calibrated, capsys):
    root, cfg, gt, est = calibrated
    for name in ("pcalib_est.txt", "vignette_est.txt", "crf_est.txt", "vignette_est.png", "run_report.txt"):
        assert (est / name).is_file()
    g, v = read_estimates(est)
    assert g.c0 == 0.0 and abs(g(1.0) - 1) < 1e-10
    report = (est / "run_report.txt").read_text()
    assert "crf_rounds_accepted\t1" in report and "vignette_rounds_accepted\t1" in report


def test_calibrate_is_deterministic(calibrated, tmp_path, capsys):
    root, _, _, est = calibrated
    assert main(["calibrate", str(root), "--matches", "files", "-o", str(tmp_path)]) == 0
    for f in est.iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name
    err = capsys.readouterr().err
    assert err.startswith("config\t") and "timing_calibrate_s" in err


def test_calibrate_internal_matcher_deterministic(small_dataset, tmp_path, capsys):
    root = small_dataset[0]
    for name in ("a", "b"):
        assert main(["calibrate", str(root), "-o", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_evaluate_matches_end_to_end(calibrated, capsys):
    root, cfg, _, est = calibrated
    capsys.readouterr()
    assert main(["evaluate", str(root), "--estimates", str(est), "--matches", "files"]) == 0
    got = metrics(capsys.readouterr().out)
    ref = end_to_end_check(cfg)
    assert got["crf_rmse"] == pytest.approx(ref["crf_rmse"], abs=1e-12)
    assert got["vignette_rmse"] == pytest.approx(ref["vignette_rmse"], abs=1e-12)
    assert got["exposure_rel_err_max"] == pytest.approx(ref["exposure_max_rel_err"], abs=1e-12)


def test_evaluate_ground_truth_estimates(small_dataset, tmp_path, capsys):
    root, cfg, gt, _ = small_dataset
    write_estimates(gt.g_star, gt.v_star, tmp_path, cfg.width, cfg.height)
    assert main(["evaluate", str(root), "--estimates", str(tmp_path), "--matches", "files"]) == 0
    out = capsys.readouterr().out
    got = metrics(out)
    assert got["crf_rmse"] < 1e-12 and got["vignette_rmse"] < 1e-12
    rows = [ln for ln in out.splitlines() if ln.startswith("exposure_rel_err\t")]
    assert rows and all(len(r.split("\t")) == 4 for r in rows)


def test_evaluate_against_vignette_image(calibrated, capsys):
    root, _, _, est = calibrated
    assert main(["evaluate", str(root), "--estimates", str(est), "--matches", "files",
                 "--gt-vignette", str(root / "vignette.png")]) == 0
    assert np.isfinite(metrics(capsys.readouterr().out)["vignette_rmse"])


def test_evaluate_missing_ground_truth(calibrated, tmp_path, capsys):
    root, _, _, est = calibrated
    bare = tmp_path / "bare"
    shutil.copytree(root / "images", bare / "images")
    shutil.copy(root / "times.txt", bare / "times.txt")
    assert main(["evaluate", str(bare), "--estimates", str(est), "--matches", "internal"]) == 1
    assert "ground truth" in capsys.readouterr().err


def test_constant_exposure_exits_2(tmp_path, capsys):
    assert main(["simulate", str(tmp_path), "--frames", "40", "--width", "48", "--height", "32",
                 "--exposure-pattern", "constant"]) == 0
    capsys.readouterr()
    assert main(["calibrate", str(tmp_path), "--matches", "files"]) == 2
    assert "no exposure-gated pairs found" in capsys.readouterr().err


def test_missing_times_exits_1(tmp_path, capsys):
    (tmp_path / "images").mkdir()
    assert main(["calibrate", str(tmp_path)]) == 1
    assert "times.txt" in capsys.readouterr().err


def test_correct_missing_estimates(small_dataset, tmp_path, capsys):
    root = small_dataset[0]
    assert main(["correct", str(root), "--estimates", str(tmp_path / "nope"), "-o", str(tmp_path / "out")]) == 1


def test_correct_unwritable_output(calibrated, tmp_path, capsys):
    root, _, _, est = calibrated
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["correct", str(root), "--estimates", str(est), "-o", str(blocker / "out")]) == 1


def read_corrected(out_dir, fid):
    scale = float((out_dir / "scale.txt").read_text().split()[1])
    return np.asarray(Image.open(out_dir / f"{fid:06d}.png"), dtype=float) / 65535 * scale, scale


def test_correct_identity_is_proportional(small_dataset, tmp_path, capsys):
    root, cfg, _, seq = small_dataset
    write_estimates(InverseResponse.identity(), VignetteModel(0, 0, 0), tmp_path / "est", cfg.width, cfg.height)
    assert main(["correct", str(root), "--estimates", str(tmp_path / "est"), "-o", str(tmp_path / "out"),
                 "--no-divide-exposure"]) == 0
    vals, scale = read_corrected(tmp_path / "out", 3)
    np.testing.assert_allclose(vals, seq.frame(3).image / 255, atol=0.5 * scale / 65535 + 1e-12)


def test_correct_constancy_across_exposures(tmp_path, capsys):
    """A static pixel must map to the same radiance in short and long frames.

    The input is 8-bit, so each frame carries up to half an intensity level of
    rounding error, amplified by the slope of g, plus half a 16-bit output step.
    """
    cfg = SimConfig(frames=6, width=48, height=32, motion_speed=0.0)
    gt = make_ground_truth(cfg)
    render_sequence(gt, cfg, tmp_path / "seq")
    write_estimates(gt.g_star, gt.v_star, tmp_path / "est", cfg.width, cfg.height)
    assert main(["correct", str(tmp_path / "seq"), "--estimates", str(tmp_path / "est"),
                 "-o", str(tmp_path / "out")]) == 0
    seq = load_sequence(tmp_path / "seq")
    V = gt.v_star.render(cfg.width, cfg.height)
    slope = gt.g_star.c1 + 2 * gt.g_star.c2  # max of g' on [0, 1]
    frames = [read_corrected(tmp_path / "out", t) for t in range(cfg.frames)]
    scale = frames[0][1]

    def bound(t):
        return (slope * 0.5 / 255 + 1e-3) / (V * seq.exposures[t] / 1000) + 0.5 * scale / 65535

    for t in range(1, cfg.frames):
        diff = np.abs(frames[t][0] - frames[0][0])
        assert np.all(diff <= bound(0) + bound(t))
    expected = 1000 * gt.radiance / gt.exposures.max()
    assert np.all(np.abs(frames[0][0] - expected) <= bound(0))


def test_simulate_cli_matches_library(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "cli"), "--frames", "35", "--width", "48", "--height", "32",
                 "--seed", "4"]) == 0
    cfg = SimConfig(frames=35, width=48, height=32, seed=4)
    render_sequence(make_ground_truth(cfg), cfg, tmp_path / "lib")
    for p in (tmp_path / "lib").rglob("*"):
        if p.is_file():
            assert (tmp_path / "cli" / p.relative_to(tmp_path / "lib")).read_bytes() == p.read_bytes()


def test_bad_arguments_exit_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["calibrate"])
    assert exc.value.code != 0
