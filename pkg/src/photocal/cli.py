"""Command line entry point: simulate, calibrate, evaluate and correct.

Exit codes: 0 success, 1 I/O or configuration error, 2 parameters not
estimable from the data (or no estimation round passed validation).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .correspondence import MatcherConfig
from .crf import CrfPairGate, evaluate_crf
from .dataset_io import (
    load_response_curve,
    load_sequence,
    load_vignette_image,
    read_estimates,
    read_vignette_coeffs,
    write_corrected,
    write_estimates,
)
from .errors import DatasetError, NotEstimableError, ValidationFailedError
from .numerics import SolverConfig
from .pipeline import CalibrationConfig, CalibrationResult, MatchFiles, calibrate, exposure_errors, internal_matcher
from .simulator import SimConfig, make_ground_truth, render_sequence
from .models import InverseResponse, VignetteModel
from .vignette import VignettePairing, evaluate_vignette

logger = logging.getLogger("photocal")

EXIT_OK, EXIT_IO, EXIT_NOT_ESTIMABLE = 0, 1, 2


def _grid(text: str) -> tuple[int, int]:
    parts = text.lower().replace(",", "x").split("x")
    if len(parts) == 1:
        parts = parts * 2
    try:
        gx, gy = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, expected e.g. 4x4") from None
    return gx, gy


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    m = p.add_argument_group("correspondences")
    m.add_argument("--matches", choices=("internal", "files"), default="internal", dest="match_source")
    m.add_argument("--matches-dir", type=Path, help="match files directory (default <seq>/gt_matches)")
    m.add_argument("--max-features", type=int, default=MatcherConfig.max_features)
    m.add_argument("--patch-radius", type=int, default=MatcherConfig.patch_radius)
    m.add_argument("--min-score", type=float, default=MatcherConfig.min_score)
    m.add_argument("--ratio-test", type=float, default=MatcherConfig.ratio)
    m.add_argument("--min-matches", type=int, default=MatcherConfig.min_matches)
    m.add_argument("--grid", type=_grid, default=(4, 4))
    m.add_argument("--bins", type=int, default=36)
    m.add_argument("--no-orientation-filter", action="store_true")

    c = p.add_argument_group("response")
    c.add_argument("--crf-window", type=int, default=CrfPairGate.window)
    c.add_argument("--ratio-low", type=float, default=CrfPairGate.ratio_low)
    c.add_argument("--ratio-high", type=float, default=CrfPairGate.ratio_high)
    c.add_argument("--max-radial-disp", type=float, default=CrfPairGate.max_radial_disp)
    c.add_argument("--min-samples", type=int, default=CrfPairGate.min_samples_per_pair)

    v = p.add_argument_group("vignette")
    v.add_argument("--vignette-offset", type=int, default=VignettePairing.offset)
    v.add_argument("--vignette-window", type=int, default=VignettePairing.window)
    v.add_argument("--min-radial-disp", type=float, default=VignettePairing.min_radial_disp)
    v.add_argument("--vignette-solver", choices=("l2", "l1", "huber"), default="huber")
    v.add_argument("--irls-max-iter", type=int, default=50)
    v.add_argument("--irls-tol", type=float, default=1e-10)

    e = p.add_argument_group("validation")
    e.add_argument("--exposure-tol", type=float, default=0.02)
    e.add_argument("--round-accept-fraction", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photocal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic sequence with ground truth")
    s.add_argument("output_dir", type=Path)
    s.add_argument("--frames", type=int, default=SimConfig.frames)
    s.add_argument("--width", type=int, default=SimConfig.width)
    s.add_argument("--height", type=int, default=SimConfig.height)
    s.add_argument("--exposure-pattern", choices=("alternating", "random-walk", "constant"), default="alternating")
    s.add_argument("--exposure-base", type=float, default=SimConfig.exposure_base)
    s.add_argument("--exposure-ratio", type=float, default=SimConfig.exposure_ratio)
    s.add_argument("--motion-speed", type=float, default=SimConfig.motion_speed)
    s.add_argument("--motion-angle", type=float, default=SimConfig.motion_angle)
    s.add_argument("--noise-sigma", type=float, default=SimConfig.noise_sigma)
    s.add_argument("--outlier-fraction", type=float, default=SimConfig.outlier_fraction)
    s.add_argument("--outlier-scope", choices=("all", "vignette"), default="all")
    s.add_argument("--match-stride", type=int, default=SimConfig.match_stride)
    s.add_argument("--match-offsets", type=int, nargs="+", default=list(SimConfig.match_offsets))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--crf", type=float, nargs=3, metavar=("C0", "C1", "C2"), default=(0.0, 0.6, 0.4))
    s.add_argument("--vignette", type=float, nargs=3, metavar=("V1", "V2", "V3"), default=(-0.7, 0.3, -0.1))

    c = sub.add_parser("calibrate", help="estimate response and vignette from a sequence")
    c.add_argument("sequence_dir", type=Path)
    c.add_argument("-o", "--output-dir", type=Path, help="default <seq>/calib")
    _add_pipeline_flags(c)

    e = sub.add_parser("evaluate", help="compare estimates with ground truth")
    e.add_argument("sequence_dir", type=Path)
    e.add_argument("--estimates", type=Path, help="estimates directory (default <seq>/calib)")
    e.add_argument("--gt-response", type=Path, help="256-value response file (default <seq>/pcalib.txt)")
    e.add_argument(
        "--gt-vignette", type=Path,
        help="coefficient file or 16-bit image (default <seq>/gt_params/vignette_coeffs.txt, then <seq>/vignette.png)",
    )
    _add_pipeline_flags(e)

    r = sub.add_parser("correct", help="write photometrically corrected frames")
    r.add_argument("sequence_dir", type=Path)
    r.add_argument("--estimates", type=Path, help="estimates directory (default <seq>/calib)")
    r.add_argument("-o", "--output-dir", type=Path, required=True)
    r.add_argument("--no-divide-exposure", action="store_true")
    return parser


def calibration_config(args) -> CalibrationConfig:
    return CalibrationConfig(
        crf_gate=CrfPairGate(args.ratio_low, args.ratio_high, args.crf_window, args.max_radial_disp, args.min_samples),
        pairing=VignettePairing(args.vignette_offset, args.vignette_window, args.min_radial_disp),
        solver=SolverConfig(kind=args.vignette_solver, irls_max_iter=args.irls_max_iter, irls_tol=args.irls_tol),
        exposure_tol=args.exposure_tol,
        grid=args.grid,
        bins=args.bins,
        orientation_filter=not args.no_orientation_filter,
        round_accept_fraction=args.round_accept_fraction,
    )


def match_provider(args):
    if args.match_source == "files":
        directory = args.matches_dir or args.sequence_dir / "gt_matches"
        if not directory.is_dir():
            raise DatasetError(f"missing match directory {directory}")
        return MatchFiles(directory, args.min_matches)
    cfg = MatcherConfig(
        max_features=args.max_features,
        patch_radius=args.patch_radius,
        min_score=args.min_score,
        ratio=args.ratio_test,
        min_matches=args.min_matches,
    )
    return internal_matcher(cfg)


def _echo_config(args) -> None:
    items = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    print("config\t" + " ".join(f"{k}={v}" for k, v in items.items()), file=sys.stderr)


def format_report(res: CalibrationResult) -> str:
    lines = ["# photometric calibration report"]
    lines += [f"{k}\t{v}" for k, v in res.stats.items()]
    lines.append("crf_coeffs\t" + "\t".join(f"{x:.17g}" for x in res.response.coeffs))
    lines.append("vignette_coeffs\t" + "\t".join(f"{x:.17g}" for x in res.vignette.coeffs))
    lines.append("vignette_plausible\t" + str(res.vignette.plausible))
    lines.append("# rounds: stage first_id last_id pairs rows accepted coeffs")
    for stage, rounds in (("crf", res.crf_rounds), ("vignette", res.vignette_rounds)):
        for r in rounds:
            coeffs = "\t".join(f"{x:.17g}" for x in r.estimate.coeffs) if r.estimate is not None else "-"
            lines.append(f"{stage}\t{r.window[0]}\t{r.window[1]}\t{len(r.pairs_used)}\t{r.rows}\t{r.accepted}\t{coeffs}")
    lines.append("# validation: stage a b k_meta k_hat rel_error status")
    lines += [r.as_row() for r in res.reports]
    return "\n".join(lines) + "\n"


def run_simulate(args) -> int:
    cfg = SimConfig(
        frames=args.frames,
        width=args.width,
        height=args.height,
        exposure_pattern=args.exposure_pattern,
        exposure_base=args.exposure_base,
        exposure_ratio=args.exposure_ratio,
        motion_speed=args.motion_speed,
        motion_angle=args.motion_angle,
        noise_sigma=args.noise_sigma,
        outlier_fraction=args.outlier_fraction,
        outlier_scope=args.outlier_scope,
        match_stride=args.match_stride,
        match_offsets=tuple(args.match_offsets),
        seed=args.seed,
    )
    gt = make_ground_truth(cfg, InverseResponse(*args.crf), VignetteModel(*args.vignette))
    render_sequence(gt, cfg, args.output_dir)
    logger.info("wrote %d frames to %s", cfg.frames, args.output_dir)
    return EXIT_OK


def run_calibrate(args) -> int:
    t0 = time.perf_counter()
    seq = load_sequence(args.sequence_dir)
    cfg = calibration_config(args)
    provider = match_provider(args)
    t1 = time.perf_counter()
    res = calibrate(seq, provider, cfg)
    t2 = time.perf_counter()
    out = args.output_dir or args.sequence_dir / "calib"
    write_estimates(res.response, res.vignette, out, seq.width, seq.height)
    report = format_report(res)
    try:
        (out / "run_report.txt").write_text(report)
    except OSError as exc:
        raise DatasetError(f"cannot write run report: {exc}") from exc
    for r in res.reports:
        print(r.as_row(), file=sys.stderr)
    # timings stay off disk so repeated runs produce identical files
    print(f"timing_load_s\t{t1 - t0:.3f}\ntiming_calibrate_s\t{t2 - t1:.3f}", file=sys.stderr)
    print(f"estimates written to {out}", file=sys.stderr)
    return EXIT_OK


def _load_gt_vignette(args, seq):
    path = args.gt_vignette
    if path is None:
        for cand in (args.sequence_dir / "gt_params" / "vignette_coeffs.txt", args.sequence_dir / "vignette.png"):
            if cand.is_file():
                path = cand
                break
    if path is None or not path.is_file():
        raise DatasetError("missing vignette ground truth")
    if path.suffix == ".txt":
        return read_vignette_coeffs(path)
    return load_vignette_image(path, (seq.height, seq.width))


def evaluate_metrics(args) -> tuple[float, float, list]:
    seq = load_sequence(args.sequence_dir)
    g, v = read_estimates(args.estimates or args.sequence_dir / "calib")
    gt_resp = args.gt_response or args.sequence_dir / "pcalib.txt"
    if not gt_resp.is_file():
        raise DatasetError(f"missing response ground truth {gt_resp}")
    crf_rmse = evaluate_crf(g, load_response_curve(gt_resp))
    vig_rmse = evaluate_vignette(v, _load_gt_vignette(args, seq))
    reports = exposure_errors(seq, g, v, match_provider(args), calibration_config(args))
    return crf_rmse, vig_rmse, reports


def run_evaluate(args) -> int:
    crf_rmse, vig_rmse, reports = evaluate_metrics(args)
    print(f"crf_rmse\t{crf_rmse:.17g}")
    print(f"vignette_rmse\t{vig_rmse:.17g}")
    worst = max((r.rel_error for r in reports), default=float("nan"))
    print(f"exposure_rel_err_max\t{worst:.17g}")
    for r in reports:
        print(f"exposure_rel_err\t{r.pair[0]}\t{r.pair[1]}\t{r.rel_error:.17g}")
    return EXIT_OK


def run_correct(args) -> int:
    seq = load_sequence(args.sequence_dir)
    g, v = read_estimates(args.estimates or args.sequence_dir / "calib")
    scale = write_corrected(seq, g, v, args.output_dir, divide_exposure=not args.no_divide_exposure)
    logger.info("wrote %d corrected frames to %s (scale %.6g)", len(seq), args.output_dir, scale)
    return EXIT_OK


COMMANDS = {"simulate": run_simulate, "calibrate": run_calibrate, "evaluate": run_evaluate, "correct": run_correct}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    _echo_config(args)
    try:
        return COMMANDS[args.command](args)
    except (NotEstimableError, ValidationFailedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_ESTIMABLE
    except (DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
