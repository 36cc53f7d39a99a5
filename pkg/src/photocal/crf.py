"""Inverse camera response estimation from exposure-gated frame pairs.

For a correspondence seen with intensities M1, M2 in frames with exposure
ratio k = e1/e2 and (nearly) the same vignette factor,
g(M1) = k g(M2).  With g(M) = c0 + c1 M + c2 M^2 every correspondence gives
one homogeneous row [1-k, M1-k M2, M1^2-k M2^2] . c = 0, and the
constraints g(0)=0, g(1)=1 pin down the solution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .correspondence import MatchSet
from .dataset_io import ResponseCurve, Sequence
from .models import InverseResponse
from .numerics import solve_saddle

logger = logging.getLogger(__name__)

SATURATION_LOW = 0.02
SATURATION_HIGH = 0.98


@dataclass(frozen=True)
class CrfPairGate:
    ratio_low: float = 0.92
    ratio_high: float = 1.08
    window: int = 200
    max_radial_disp: float = 0.02
    min_samples_per_pair: int = 10

    def __post_init__(self):
        if not 0 < self.ratio_low < 1 < self.ratio_high:
            raise ValueError("need 0 < ratio_low < 1 < ratio_high")
        if self.window < 2:
            raise ValueError("CRF window must hold at least two frames")

    def passes(self, k: float) -> bool:
        return k < self.ratio_low or k > self.ratio_high


def windows(n: int, size: int) -> list[range]:
    """Disjoint consecutive index windows covering 0..n-1."""
    return [range(s, min(s + size, n)) for s in range(0, n, size)]


def select_crf_pairs(seq: Sequence, gate: CrfPairGate = CrfPairGate()) -> list[list[tuple[int, int]]]:
    """Exposure-gated consecutive pairs, grouped by window, in arrival order.

    A pair belongs to the window holding its first frame, so every consecutive
    pair is considered exactly once.
    """
    exp = seq.exposures
    ids = seq.frame_ids
    out = []
    for win in windows(len(seq) - 1, gate.window):
        pairs = [(ids[i], ids[i + 1]) for i in win if gate.passes(exp[i] / exp[i + 1])]
        out.append(pairs)
    return out


def saturation_mask(M1, M2) -> np.ndarray:
    M1, M2 = np.asarray(M1), np.asarray(M2)
    return (
        (M1 >= SATURATION_LOW) & (M1 <= SATURATION_HIGH) & (M2 >= SATURATION_LOW) & (M2 <= SATURATION_HIGH)
    )


def crf_rows(M1, M2, k) -> np.ndarray:
    M1, M2 = np.asarray(M1, float), np.asarray(M2, float)
    k = np.broadcast_to(np.asarray(k, float), M1.shape)
    return np.column_stack([1.0 - k, M1 - k * M2, M1**2 - k * M2**2])


def crf_mask(ms: MatchSet, gate: CrfPairGate) -> np.ndarray:
    """Matches usable for CRF rows: small radial motion and not near saturation."""
    return (ms.radial_displacement <= gate.max_radial_disp) & saturation_mask(ms.M1, ms.M2)


def build_crf_rows(ms: MatchSet, gate: CrfPairGate = CrfPairGate()) -> np.ndarray:
    """Rows for one pair; an empty (0, 3) array when too few samples survive."""
    mask = crf_mask(ms, gate)
    if mask.sum() < gate.min_samples_per_pair:
        logger.debug("pair %s: %d CRF samples < %d, skipped", ms.pair, mask.sum(), gate.min_samples_per_pair)
        return np.zeros((0, 3))
    return crf_rows(ms.M1[mask], ms.M2[mask], ms.k)


def estimate_crf(rows) -> InverseResponse:
    """Constrained minimizer of ||A c||^2 with g(0)=0 and g(1)=1."""
    A = np.atleast_2d(np.asarray(rows, dtype=float))
    if A.size == 0:
        raise ValueError("need at least one row")
    sol = solve_saddle(A)
    c = sol.c
    # c0 is fixed by a constraint; drop the round-off so g(0) == 0 exactly
    return InverseResponse(0.0, float(c[1]), float(c[2]), singular=sol.singular)


def evaluate_crf(g: InverseResponse, gt: ResponseCurve | InverseResponse) -> float:
    """RMSE between g and a reference over the 256 uniform intensity samples."""
    ref = gt.samples if isinstance(gt, ResponseCurve) else gt.table(256)
    return float(np.sqrt(np.mean((g.table(256) - ref) ** 2)))
