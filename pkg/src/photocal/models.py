"""Photometric parameter models shared by the estimators, simulator and I/O.

Intensities and irradiances are normalized to [0, 1] throughout. Radii are
measured from the image center (W/2, H/2) in pixel-index coordinates and
divided by the half-diagonal, so every pixel of the frame has R in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Radius grid used for plausibility checks and model-vs-model RMSE.
RADIUS_GRID = np.linspace(0.0, 1.0, 256)


def normalized_radius(x, y, width: int, height: int):
    """Distance from the image center divided by the half-diagonal."""
    half_diag = 0.5 * np.hypot(width, height)
    return np.hypot(np.asarray(x, float) - 0.5 * width, np.asarray(y, float) - 0.5 * height) / half_diag


def radius_map(width: int, height: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    return normalized_radius(xs, ys, width, height)


@dataclass(frozen=True)
class InverseResponse:
    """Quadratic inverse camera response g(M) = c0 + c1*M + c2*M**2.

    ``singular`` records that the system it was solved from was rank
    deficient (the returned coefficients are then the minimum-norm choice).
    """

    c0: float = 0.0
    c1: float = 1.0
    c2: float = 0.0
    singular: bool = field(default=False, compare=False)

    @classmethod
    def identity(cls) -> "InverseResponse":
        return cls(0.0, 1.0, 0.0)

    @classmethod
    def from_coeffs(cls, c, singular: bool = False) -> "InverseResponse":
        c = np.asarray(c, dtype=float)
        return cls(float(c[0]), float(c[1]), float(c[2]), singular=singular)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        return self.c0 + (self.c1 + self.c2 * m) * m

    def projected(self) -> "InverseResponse":
        """Snap onto the constraint set: c0 = 0 and c1 + c2 = 1."""
        s = self.c1 + self.c2
        if s == 0.0:
            raise ValueError("cannot project response with c1 + c2 == 0")
        return InverseResponse(0.0, self.c1 / s, self.c2 / s, singular=self.singular)

    def table(self, n: int = 256) -> np.ndarray:
        """g sampled at i/(n-1) for i = 0..n-1."""
        return self(np.linspace(0.0, 1.0, n))

    def is_strictly_increasing(self, n: int = 1024) -> bool:
        return bool(np.min(np.diff(self.table(n))) > 0.0)


@dataclass(frozen=True)
class VignetteModel:
    """Radial vignette V(R) = 1 + v1 R^2 + v2 R^4 + v3 R^6, centered on the frame."""

    v1: float = 0.0
    v2: float = 0.0
    v3: float = 0.0
    singular: bool = field(default=False, compare=False)

    @classmethod
    def from_coeffs(cls, v, singular: bool = False) -> "VignetteModel":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]), singular=singular)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3])

    def __call__(self, r):
        r2 = np.asarray(r, dtype=float) ** 2
        return 1.0 + r2 * (self.v1 + r2 * (self.v2 + r2 * self.v3))

    @property
    def plausible(self) -> bool:
        """True when V stays inside (0, 1.05] on the radius grid."""
        vals = self(RADIUS_GRID)
        return bool(np.all(vals > 0.0) and np.all(vals <= 1.05))

    def render(self, width: int, height: int) -> np.ndarray:
        return self(radius_map(width, height))
