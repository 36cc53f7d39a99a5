"""Radial vignette estimation from offset frame pairs with large radial motion."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .correspondence import MatchSet
from .crf import saturation_mask, windows
from .dataset_io import Sequence, VignetteImage
from .models import RADIUS_GRID, InverseResponse, VignetteModel, normalized_radius
from .numerics import SolverConfig, SolverKind, least_squares

logger = logging.getLogger(__name__)

MIN_RESPONSE = 1e-4


@dataclass(frozen=True)
class VignettePairing:
    offset: int = 30
    window: int = 400
    min_radial_disp: float = 0.2

    def __post_init__(self):
        if self.offset < 1:
            raise ValueError("offset must be >= 1")
        if self.window < self.offset:
            raise ValueError("window must be >= offset")


def select_vignette_pairs(seq: Sequence, p: VignettePairing = VignettePairing()) -> list[list[tuple[int, int]]]:
    """Pairs (i, i + offset) inside each disjoint window, grouped by window."""
    ids = seq.frame_ids
    out = []
    for win in windows(len(seq), p.window):
        out.append([(ids[i], ids[i + p.offset]) for i in win if i + p.offset <= win[-1]])
    return out


def vignette_mask(ms: MatchSet, g: InverseResponse, p: VignettePairing) -> np.ndarray:
    return (
        (ms.radial_displacement >= p.min_radial_disp)
        & saturation_mask(ms.M1, ms.M2)
        & (g(ms.M2) >= MIN_RESPONSE)
    )


def vignette_rows(R1, R2, psi) -> tuple[np.ndarray, np.ndarray]:
    R1, R2, psi = (np.asarray(a, float) for a in (R1, R2, psi))
    B = np.column_stack([R1**2 - psi * R2**2, R1**4 - psi * R2**4, R1**6 - psi * R2**6])
    return B, psi - 1.0


def build_vignette_rows(
    ms: MatchSet, g: InverseResponse, p: VignettePairing = VignettePairing()
) -> tuple[np.ndarray, np.ndarray]:
    """Linear rows B v = b with psi = g(M1) / (g(M2) k)."""
    mask = vignette_mask(ms, g, p)
    if not mask.any():
        return np.zeros((0, 3)), np.zeros(0)
    psi = g(ms.M1[mask]) / (g(ms.M2[mask]) * ms.k)
    return vignette_rows(ms.R1[mask], ms.R2[mask], psi)


def estimate_vignette(B, b, solver: SolverConfig | SolverKind | str = SolverKind.HUBER_IRLS) -> VignetteModel:
    if not isinstance(solver, SolverConfig):
        solver = SolverConfig(kind=solver)
    B = np.atleast_2d(np.asarray(B, float))
    if B.shape[0] < 3:
        raise ValueError(f"need at least 3 rows, got {B.shape[0]}")
    res = least_squares(B, b, solver)
    v = VignetteModel.from_coeffs(res.x, singular=res.singular)
    if not v.plausible:
        logger.warning("vignette estimate %s leaves (0, 1.05] on [0, 1]", np.round(v.coeffs, 4))
    return v


def evaluate_vignette(v: VignetteModel, gt: VignetteModel | VignetteImage) -> float:
    """RMSE over the radius grid (model reference) or over all pixels (image reference)."""
    if isinstance(gt, VignetteModel):
        est, ref = v(RADIUS_GRID), gt(RADIUS_GRID)
        return float(np.sqrt(np.mean((est / est[0] - ref / ref[0]) ** 2)))
    h, w = gt.shape
    ys, xs = np.mgrid[0:h, 0:w]
    est = v(normalized_radius(xs, ys, w, h))
    # the center pixel sits at R = 0 for even sizes
    ref = gt.values / gt.values[h // 2, w // 2]
    return float(np.sqrt(np.mean((est - ref) ** 2)))
