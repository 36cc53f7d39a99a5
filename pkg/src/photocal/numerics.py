"""Linear algebra kernels: the constrained quadratic (KKT) solve and robust least squares."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

# Constraints g(1) = c0 + c1 + c2 = 1 and g(0) = c0 = 0.
CRF_E = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]])
CRF_D = np.array([1.0, 0.0])

L1_EPS = 1e-6
HUBER_K = 1.345
MAD_SCALE = 1.4826


class SolverKind(str, enum.Enum):
    L2 = "l2"
    L1_IRLS = "l1"
    HUBER_IRLS = "huber"


@dataclass(frozen=True)
class SolverConfig:
    kind: SolverKind = SolverKind.L2
    huber_delta: float | None = None  # None: re-estimate from the MAD every iteration
    irls_max_iter: int = 50
    irls_tol: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "kind", SolverKind(self.kind))
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if self.irls_max_iter < 1:
            raise ValueError("irls_max_iter must be >= 1")


class SaddleSolution(NamedTuple):
    c: np.ndarray
    lam: np.ndarray
    rank: int
    singular: bool


class LstsqResult(NamedTuple):
    x: np.ndarray
    singular: bool
    converged: bool
    iterations: int


def kkt_matrix(A: np.ndarray, E: np.ndarray = CRF_E) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, p = E.shape[1], E.shape[0]
    K = np.zeros((m + p, m + p))
    K[:m, :m] = 2.0 * A.T @ A
    K[:m, m:] = E.T
    K[m:, :m] = E
    return K


def solve_saddle(A: np.ndarray, E: np.ndarray = CRF_E, d: np.ndarray = CRF_D) -> SaddleSolution:
    """Minimize ||A c||^2 subject to E c = d through the KKT saddle-point system.

    The 5x5 system is solved with an SVD-based least squares solve, so a
    singular block matrix yields its minimum-norm stationary point.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] < 1:
        raise ValueError("need at least one row")
    # the minimizer is invariant to scaling A; normalizing keeps the 2A^T A
    # block commensurate with E so the SVD cutoff cannot discard the constraints
    scale = np.linalg.norm(A)
    if scale > 0:
        A = A / scale
    K = kkt_matrix(A, E)
    rhs = np.concatenate([np.zeros(E.shape[1]), d])
    sol, _, rank, _ = np.linalg.lstsq(K, rhs, rcond=None)
    m = E.shape[1]
    singular = rank < K.shape[0]
    if singular:
        logger.debug("KKT system rank %d < %d", rank, K.shape[0])
    lam = sol[m:] * (scale**2 if scale > 0 else 1.0)
    return SaddleSolution(sol[:m], lam, int(rank), bool(singular))


def _weighted_lstsq(B, b, w):
    sw = np.sqrt(w)
    x, _, rank, _ = np.linalg.lstsq(B * sw[:, None], b * sw, rcond=None)
    return x, rank


def least_squares(B: np.ndarray, b: np.ndarray, cfg: SolverConfig | None = None) -> LstsqResult:
    """Solve B x ~= b under the L2, L1 (IRLS) or Huber (IRLS) loss."""
    cfg = cfg or SolverConfig()
    B = np.atleast_2d(np.asarray(B, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n, m = B.shape
    if b.shape[0] != n:
        raise ValueError(f"B has {n} rows but b has {b.shape[0]} entries")
    if n < m:
        raise ValueError(f"need at least {m} rows, got {n}")

    x, rank = _weighted_lstsq(B, b, np.ones(n))
    singular = rank < m
    if cfg.kind is SolverKind.L2:
        return LstsqResult(x, bool(singular), True, 1)
    if n < m + 1:
        raise ValueError(f"robust solvers need at least {m + 1} rows, got {n}")

    for it in range(1, cfg.irls_max_iter + 1):
        r = np.abs(B @ x - b)
        if cfg.kind is SolverKind.L1_IRLS:
            w = 1.0 / np.maximum(r, L1_EPS)
        else:
            delta = cfg.huber_delta
            if delta is None:
                delta = HUBER_K * MAD_SCALE * float(np.median(r))
            if delta <= 0.0:
                # at least half the residuals are exactly zero: nothing to reweight
                return LstsqResult(x, bool(singular), True, it)
            w = np.where(r <= delta, 1.0, delta / np.maximum(r, np.finfo(float).tiny))
        x_new, rank = _weighted_lstsq(B, b, w)
        singular = rank < m
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if step < cfg.irls_tol:
            return LstsqResult(x, bool(singular), True, it)
    logger.debug("IRLS (%s) did not converge in %d iterations", cfg.kind.value, cfg.irls_max_iter)
    return LstsqResult(x, bool(singular), False, cfg.irls_max_iter)
