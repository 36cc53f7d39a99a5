"""Exposure-ratio re-estimation and the validation gate for CRF and vignette estimates."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .correspondence import MatchSet
from .errors import ValidationFailedError
from .models import InverseResponse, VignetteModel

MIN_RESPONSE = 1e-4
MIN_VIGNETTE = 1e-3
DEFAULT_TOL = 0.02


class Stage(str, enum.Enum):
    CRF_ONLY = "crf"
    CRF_AND_VIGNETTE = "crf+vignette"


@dataclass(frozen=True)
class ValidationReport:
    pair: tuple[int, int]
    k_meta: float
    k_hat: float
    rel_error: float
    accepted: bool
    stage: Stage = Stage.CRF_ONLY

    def as_row(self) -> str:
        a, b = self.pair
        return (
            f"{self.stage.value}\t{a}\t{b}\t{self.k_meta:.6g}\t{self.k_hat:.6g}"
            f"\t{self.rel_error:.6g}\t{'ok' if self.accepted else 'REJECT'}"
        )


def ratio_terms(ms: MatchSet, g: InverseResponse, v: VignetteModel | None = None) -> np.ndarray:
    """Per-match exposure ratio estimates g(M1) V(R2) / (g(M2) V(R1)); unusable matches dropped."""
    g1, g2 = g(ms.M1), g(ms.M2)
    if v is None:
        V1 = V2 = np.ones_like(g1)
    else:
        V1, V2 = v(ms.R1), v(ms.R2)
    ok = (g2 >= MIN_RESPONSE) & (V1 >= MIN_VIGNETTE) & (V2 >= MIN_VIGNETTE)
    return g1[ok] * V2[ok] / (g2[ok] * V1[ok])


def estimate_exposure_ratio(ms: MatchSet, g: InverseResponse, v: VignetteModel | None = None) -> float:
    """Mean of the per-match ratio terms; V is taken as 1 when ``v`` is None."""
    terms = ratio_terms(ms, g, v)
    if terms.size == 0:
        raise ValueError("no usable matches for exposure estimation")
    return float(np.mean(terms))


def validate(
    k_hat: float,
    k_meta: float,
    tol: float = DEFAULT_TOL,
    pair: tuple[int, int] = (-1, -1),
    stage: Stage = Stage.CRF_ONLY,
) -> ValidationReport:
    if not k_meta > 0:
        raise ValueError("k_meta must be positive")
    rel = abs(k_hat - k_meta) / k_meta
    return ValidationReport(pair, float(k_meta), float(k_hat), float(rel), bool(rel <= tol), Stage(stage))


def aggregate(estimates, accepted=None):
    """Coefficient-wise mean over accepted estimates.

    ``accepted`` is a parallel sequence of flags or ValidationReports; None
    accepts everything. CRF means are re-projected onto g(0)=0, g(1)=1.
    """
    estimates = list(estimates)
    if accepted is None:
        accepted = [True] * len(estimates)
    flags = [a.accepted if isinstance(a, ValidationReport) else bool(a) for a in accepted]
    chosen = [e for e, ok in zip(estimates, flags) if ok]
    if not chosen:
        raise ValidationFailedError("calibration failed validation")
    if len(chosen) == 1:
        return chosen[0]
    mean = np.mean([e.coeffs for e in chosen], axis=0)
    kind = type(chosen[0])
    if any(type(e) is not kind for e in chosen):
        raise TypeError("cannot mix response and vignette estimates")
    if kind is InverseResponse:
        return InverseResponse.from_coeffs(mean).projected()
    return VignetteModel.from_coeffs(mean)

