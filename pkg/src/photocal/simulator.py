"""Synthetic image sequences with known response, vignette, exposures and motion.

A frame t shows the window of a static radiance map whose top-left corner is
``motion[t]``; pixel (x, y) of that frame therefore images texel
(x + ox, y + oy). Intensities follow M = f(e_t / e_max * V(R) * L), where f
is the inverse of the ground-truth inverse response, then optional Gaussian
noise, rounding and clamping to 8 bits.
"""
from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .correspondence import match_filename, write_matches
from .dataset_io import (
    FrameRecord,
    Sequence,
    load_sequence,
    write_response_coeffs,
    write_response_table,
    write_sequence,
    write_vignette_coeffs,
    write_vignette_image,
)
from .models import InverseResponse, VignetteModel

logger = logging.getLogger(__name__)

LUT_SIZE = 1024
DEFAULT_RESPONSE = InverseResponse(0.0, 0.6, 0.4)
DEFAULT_VIGNETTE = VignetteModel(-0.7, 0.3, -0.1)


@dataclass(frozen=True)
class SimConfig:
    frames: int = 400
    width: int = 160
    height: int = 120
    exposure_pattern: str = "alternating"  # alternating | random-walk | constant
    exposure_base: float = 5.0  # ms
    exposure_ratio: float = 2.0
    motion_speed: float = 1.0  # px / frame
    motion_angle: float = 0.0  # degrees, image x axis towards y
    noise_sigma: float = 0.0  # intensity levels, before quantization
    outlier_fraction: float = 0.0
    outlier_scope: str = "all"  # all | vignette (offset pairs only)
    match_stride: int = 4
    match_offsets: tuple[int, ...] = (30,)
    frame_rate: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.exposure_pattern not in ("alternating", "random-walk", "constant"):
            raise ValueError(f"unknown exposure pattern {self.exposure_pattern!r}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.outlier_scope not in ("all", "vignette"):
            raise ValueError(f"unknown outlier scope {self.outlier_scope!r}")


@dataclass(frozen=True, eq=False)
class SimGroundTruth:
    g_star: InverseResponse
    v_star: VignetteModel
    exposures: np.ndarray  # ms
    motion: np.ndarray  # (frames, 2) integer (ox, oy)
    radiance: np.ndarray

    def __post_init__(self):
        if not self.g_star.is_strictly_increasing(LUT_SIZE):
            raise ValueError("response not invertible")
        if np.any(np.asarray(self.exposures) <= 0):
            raise ValueError("exposures must be positive")


def forward_lut(g: InverseResponse, n: int = LUT_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """(irradiance, intensity) knots of f = g^-1."""
    m = np.linspace(0.0, 1.0, n)
    x = g(m)
    if np.any(np.diff(x) <= 0):
        raise ValueError("response not invertible")
    return x, m


def forward_response(g: InverseResponse, irradiance, n: int = LUT_SIZE):
    """Normalized intensity produced by irradiance, via a monotone lookup table of g."""
    x, m = forward_lut(g, n)
    return np.interp(irradiance, x, m)


def radiance_field(height: int, width: int, rng: np.random.Generator, n_waves: int = 24) -> np.ndarray:
    """Smooth random texture: random plane waves plus blurred noise, scaled into [0.05, 0.95]."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    field_ = np.zeros((height, width))
    for _ in range(n_waves):
        period = rng.uniform(6.0, 48.0)
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)
        field_ += amp * np.sin(2 * np.pi * (xs * np.cos(theta) + ys * np.sin(theta)) / period + phase)
    field_ /= field_.std()
    field_ += 0.8 * ndimage.gaussian_filter(rng.standard_normal((height, width)), 1.5) / 0.19
    lo, hi = field_.min(), field_.max()
    return 0.05 + 0.9 * (field_ - lo) / (hi - lo)


def exposure_schedule(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    n, base, ratio = cfg.frames, cfg.exposure_base, cfg.exposure_ratio
    if cfg.exposure_pattern == "constant":
        return np.full(n, base)
    if cfg.exposure_pattern == "alternating":
        return np.where(np.arange(n) % 2 == 0, base, base * ratio)
    lo, hi = np.log(base), np.log(base * ratio)
    out = np.empty(n)
    cur = 0.5 * (lo + hi)
    step = 0.5 * (hi - lo)
    for t in range(n):
        out[t] = np.exp(cur)
        cur = float(np.clip(cur + rng.normal(0.0, step), lo, hi))
    return out


def motion_path(cfg: SimConfig) -> np.ndarray:
    t = np.arange(cfg.frames)
    ang = np.deg2rad(cfg.motion_angle)
    ox = np.round(t * cfg.motion_speed * np.cos(ang)).astype(int)
    oy = np.round(t * cfg.motion_speed * np.sin(ang)).astype(int)
    return np.column_stack([ox - ox.min(), oy - oy.min()])


def make_ground_truth(
    cfg: SimConfig, g_star: InverseResponse = DEFAULT_RESPONSE, v_star: VignetteModel = DEFAULT_VIGNETTE
) -> SimGroundTruth:
    rng = np.random.default_rng(cfg.seed)
    motion = motion_path(cfg)
    span = motion.max(axis=0)
    radiance = radiance_field(cfg.height + int(span[1]), cfg.width + int(span[0]), rng)
    exposures = exposure_schedule(cfg, rng)
    return SimGroundTruth(g_star, v_star, exposures, motion, radiance)


def render_frame(gt: SimGroundTruth, cfg: SimConfig, t: int, vignette: np.ndarray | None = None) -> np.ndarray:
    ox, oy = (int(c) for c in gt.motion[t])
    h, w = cfg.height, cfg.width
    if oy + h > gt.radiance.shape[0] or ox + w > gt.radiance.shape[1] or ox < 0 or oy < 0:
        raise ValueError(f"frame {t}: motion leaves the radiance map")
    if vignette is None:
        vignette = gt.v_star.render(w, h)
    L = gt.radiance[oy : oy + h, ox : ox + w]
    irr = gt.exposures[t] / np.max(gt.exposures) * vignette * L
    m = 255.0 * forward_response(gt.g_star, irr)
    if cfg.noise_sigma > 0:
        m = m + np.random.default_rng([cfg.seed, t]).normal(0.0, cfg.noise_sigma, m.shape)
    return np.clip(np.round(m), 0, 255).astype(np.uint8)


def render_frames(gt: SimGroundTruth, cfg: SimConfig) -> Sequence:
    vignette = gt.v_star.render(cfg.width, cfg.height)
    frames = [
        FrameRecord(t, t / cfg.frame_rate, float(gt.exposures[t]), render_frame(gt, cfg, t, vignette))
        for t in range(cfg.frames)
    ]
    return Sequence(frames, cfg.width, cfg.height)


def match_pairs(cfg: SimConfig) -> list[tuple[int, int, bool]]:
    """(a, b, is_offset_pair) for every pair that gets a ground-truth match file."""
    pairs = [(t, t + 1, False) for t in range(cfg.frames - 1)]
    for off in cfg.match_offsets:
        if off == 1:
            continue
        pairs += [(i, i + off, True) for i in range(cfg.frames - off)]
    return pairs


def gt_matches(gt: SimGroundTruth, cfg: SimConfig, a: int, b: int, with_outliers: bool = True):
    """Exact correspondences between frames a and b; returns (x1, y1, x2, y2, outlier_mask)."""
    w, h, s = cfg.width, cfg.height, cfg.match_stride
    ys, xs = np.mgrid[s // 2 : h : s, s // 2 : w : s]
    x1, y1 = xs.ravel(), ys.ravel()
    d = gt.motion[a] - gt.motion[b]
    x2, y2 = x1 + d[0], y1 + d[1]
    inside = (x2 >= 0) & (x2 < w) & (y2 >= 0) & (y2 < h)
    x1, y1, x2, y2 = x1[inside], y1[inside], x2[inside], y2[inside]
    outlier = np.zeros(x1.size, dtype=bool)
    if with_outliers and cfg.outlier_fraction > 0 and x1.size:
        rng = np.random.default_rng([cfg.seed, a, b, 1])
        n_out = int(round(cfg.outlier_fraction * x1.size))
        idx = rng.choice(x1.size, n_out, replace=False)
        outlier[idx] = True
        x2 = x2.copy()
        y2 = y2.copy()
        x2[idx] = rng.integers(0, w, n_out)
        y2[idx] = rng.integers(0, h, n_out)
    return x1, y1, x2, y2, outlier


def render_sequence(gt: SimGroundTruth, cfg: SimConfig, out_dir) -> Sequence:
    """Write a loadable dataset plus gt_params/ and gt_matches/; returns the rendered sequence."""
    out_dir = Path(out_dir)
    seq = render_frames(gt, cfg)
    write_sequence(seq, out_dir)
    write_response_table(gt.g_star, out_dir / "pcalib.txt")
    write_vignette_image(gt.v_star.render(cfg.width, cfg.height), out_dir / "vignette.png")

    params = out_dir / "gt_params"
    params.mkdir(exist_ok=True)
    write_response_table(gt.g_star, params / "response.txt")
    write_response_coeffs(gt.g_star, params / "crf_coeffs.txt")
    write_vignette_coeffs(gt.v_star, params / "vignette_coeffs.txt")
    (params / "exposures.txt").write_text("".join(f"{t} {e!r}\n" for t, e in enumerate(gt.exposures)))

    mdir = out_dir / "gt_matches"
    mdir.mkdir(exist_ok=True)
    for a, b, is_offset in match_pairs(cfg):
        outliers = cfg.outlier_scope == "all" or is_offset
        x1, y1, x2, y2, _ = gt_matches(gt, cfg, a, b, with_outliers=outliers)
        write_matches(mdir / match_filename(a, b), x1, y1, x2, y2)
    return seq


def end_to_end_check(
    cfg: SimConfig,
    calib=None,
    match_source: str = "gt",
    g_star: InverseResponse = DEFAULT_RESPONSE,
    v_star: VignetteModel = DEFAULT_VIGNETTE,
    workdir=None,
    matcher=None,
) -> dict:
    """Render, calibrate and score; metrics are None when a stage is not estimable."""
    from .crf import evaluate_crf
    from .errors import NotEstimableError, ValidationFailedError
    from .pipeline import CalibrationConfig, MatchFiles, calibrate, exposure_errors, internal_matcher
    from .vignette import evaluate_vignette

    calib = calib or CalibrationConfig()
    gt = make_ground_truth(cfg, g_star, v_star)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir) if workdir is not None else Path(tmp)
        render_sequence(gt, cfg, root)
        seq = load_sequence(root)
        provider = MatchFiles(root / "gt_matches") if match_source == "gt" else internal_matcher(matcher)
        report = {"crf_rmse": None, "vignette_rmse": None, "exposure_max_rel_err": None, "result": None}
        try:
            res = calibrate(seq, provider, calib)
        except (NotEstimableError, ValidationFailedError) as exc:
            report["error"] = str(exc)
            return report
        reports = exposure_errors(seq, res.response, res.vignette, provider, calib)
    report.update(
        crf_rmse=evaluate_crf(res.response, g_star),
        vignette_rmse=evaluate_vignette(res.vignette, v_star),
        exposure_max_rel_err=max((r.rel_error for r in reports), default=None),
        exposure_reports=reports,
        result=res,
    )
    return report
