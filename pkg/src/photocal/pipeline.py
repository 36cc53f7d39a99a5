"""Sequential calibration: inverse response first, then vignette, each gated by exposure validation.

Frames are scanned in arrival order, one window at a time. Each window is an
estimation round; rounds whose exposure re-estimates agree with the metadata
are averaged into the final parameters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from .correspondence import (
    MatcherConfig,
    MatchSet,
    block_orientation_filter,
    detect_and_match,
    load_matches,
    match_filename,
)
from .crf import CrfPairGate, build_crf_rows, crf_mask, estimate_crf, saturation_mask, select_crf_pairs
from .dataset_io import FrameRecord, Sequence
from .errors import NotEstimableError
from .exposure import DEFAULT_TOL, Stage, ValidationReport, aggregate, estimate_exposure_ratio, validate
from .models import InverseResponse, VignetteModel
from .numerics import SolverConfig, SolverKind
from .vignette import VignettePairing, build_vignette_rows, estimate_vignette, select_vignette_pairs, vignette_mask

logger = logging.getLogger(__name__)

MatchProvider = Callable[[FrameRecord, FrameRecord], MatchSet]


class MatchFiles:
    """Reads correspondences from ``<dir>/<a>_<b>.txt``; a missing file means no matches."""

    def __init__(self, directory, min_matches: int = 8):
        self.directory = Path(directory)
        self.min_matches = min_matches

    def __call__(self, a: FrameRecord, b: FrameRecord) -> MatchSet:
        return load_matches(self.directory / match_filename(a.frame_id, b.frame_id), a, b, self.min_matches)


def internal_matcher(cfg: MatcherConfig | None = None) -> MatchProvider:
    return partial(detect_and_match, cfg=cfg or MatcherConfig())


@dataclass(frozen=True)
class CalibrationConfig:
    crf_gate: CrfPairGate = field(default_factory=CrfPairGate)
    pairing: VignettePairing = field(default_factory=VignettePairing)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(kind=SolverKind.HUBER_IRLS))
    exposure_tol: float = DEFAULT_TOL
    grid: tuple[int, int] = (4, 4)
    bins: int = 36
    orientation_filter: bool = True
    round_accept_fraction: float = 0.5
    max_pairs_per_round: int | None = None


@dataclass
class RoundResult:
    window: tuple[int, int]  # first and last frame id
    pairs_used: list[tuple[int, int]] = field(default_factory=list)
    rows: int = 0
    estimate: InverseResponse | VignetteModel | None = None
    reports: list[ValidationReport] = field(default_factory=list)
    accepted: bool = False


@dataclass
class CalibrationResult:
    response: InverseResponse
    vignette: VignetteModel
    crf_rounds: list[RoundResult]
    vignette_rounds: list[RoundResult]
    stats: dict = field(default_factory=dict)

    @property
    def reports(self) -> list[ValidationReport]:
        return [r for rnd in self.crf_rounds + self.vignette_rounds for r in rnd.reports]


def _prepare(ms: MatchSet, cfg: CalibrationConfig) -> MatchSet:
    if cfg.orientation_filter and not ms.empty:
        return block_orientation_filter(ms, cfg.grid, cfg.bins)
    return ms


def _round_accepted(reports: list[ValidationReport], cfg: CalibrationConfig) -> bool:
    if not reports:
        return False
    return np.mean([r.accepted for r in reports]) >= cfg.round_accept_fraction


def _window_of(pairs) -> tuple[int, int]:
    ids = [i for p in pairs for i in p]
    return (min(ids), max(ids)) if ids else (-1, -1)


def calibrate_response(
    seq: Sequence, provider: MatchProvider, cfg: CalibrationConfig = CalibrationConfig(), stats: dict | None = None
) -> tuple[InverseResponse, list[RoundResult]]:
    stats = stats if stats is not None else {}
    gate = cfg.crf_gate
    groups = select_crf_pairs(seq, gate)
    stats["crf_pairs_gated"] = sum(len(g) for g in groups)
    if stats["crf_pairs_gated"] == 0:
        raise NotEstimableError("no exposure-gated pairs found")

    rounds = []
    for pairs in groups:
        if not pairs:
            continue
        if cfg.max_pairs_per_round is not None:
            pairs = pairs[: cfg.max_pairs_per_round]
        rnd = RoundResult(window=_window_of(pairs))
        blocks, used = [], []
        for a, b in pairs:
            ms = _prepare(provider(seq.frame(a), seq.frame(b)), cfg)
            if ms.empty:
                continue
            rows = build_crf_rows(ms, gate)
            if len(rows):
                blocks.append(rows)
                used.append(ms)
        if not blocks:
            rounds.append(rnd)
            continue
        A = np.vstack(blocks)
        g = estimate_crf(A)
        rnd.rows, rnd.estimate, rnd.pairs_used = len(A), g, [m.pair for m in used]
        for ms in used:
            sub = ms.subset(crf_mask(ms, gate))
            try:
                k_hat = estimate_exposure_ratio(sub, g)
            except ValueError:
                continue
            rnd.reports.append(validate(k_hat, ms.k, cfg.exposure_tol, ms.pair, Stage.CRF_ONLY))
        rnd.accepted = _round_accepted(rnd.reports, cfg)
        rounds.append(rnd)
        logger.info(
            "CRF round %s: %d pairs, %d rows, c=%s, accepted=%s",
            rnd.window, len(used), rnd.rows, np.round(g.coeffs, 5), rnd.accepted,
        )

    estimated = [r for r in rounds if r.estimate is not None]
    stats["crf_rounds"] = len(rounds)
    stats["crf_rounds_accepted"] = int(sum(r.accepted for r in estimated))
    if not estimated:
        raise NotEstimableError("CRF not estimable: no gated pair yielded enough samples")
    g = aggregate([r.estimate for r in estimated], [r.accepted for r in estimated])
    return g, rounds


def calibrate_vignette(
    seq: Sequence,
    g: InverseResponse,
    provider: MatchProvider,
    cfg: CalibrationConfig = CalibrationConfig(),
    stats: dict | None = None,
) -> tuple[VignetteModel, list[RoundResult]]:
    stats = stats if stats is not None else {}
    p = cfg.pairing
    groups = select_vignette_pairs(seq, p)
    rounds = []
    empty_sets = 0
    for pairs in groups:
        if not pairs:
            continue
        if cfg.max_pairs_per_round is not None:
            pairs = pairs[: cfg.max_pairs_per_round]
        rnd = RoundResult(window=_window_of(pairs))
        Bs, bs, used = [], [], []
        for a, b in pairs:
            ms = _prepare(provider(seq.frame(a), seq.frame(b)), cfg)
            if ms.empty:
                empty_sets += 1
                continue
            B, rhs = build_vignette_rows(ms, g, p)
            if len(B):
                Bs.append(B)
                bs.append(rhs)
                used.append(ms)
        rows = sum(len(B) for B in Bs)
        if rows < 3:
            rounds.append(rnd)
            continue
        v = estimate_vignette(np.vstack(Bs), np.concatenate(bs), cfg.solver)
        rnd.rows, rnd.estimate, rnd.pairs_used = rows, v, [m.pair for m in used]
        for ms in used:
            sub = ms.subset(vignette_mask(ms, g, p))
            try:
                k_hat = estimate_exposure_ratio(sub, g, v)
            except ValueError:
                continue
            rnd.reports.append(validate(k_hat, ms.k, cfg.exposure_tol, ms.pair, Stage.CRF_AND_VIGNETTE))
        rnd.accepted = _round_accepted(rnd.reports, cfg)
        rounds.append(rnd)
        logger.info(
            "vignette round %s: %d pairs, %d rows, v=%s, accepted=%s",
            rnd.window, len(used), rows, np.round(v.coeffs, 5), rnd.accepted,
        )

    estimated = [r for r in rounds if r.estimate is not None]
    stats["vignette_pairs"] = sum(len(g_) for g_ in groups)
    stats["vignette_empty_match_sets"] = empty_sets
    stats["vignette_rows"] = sum(r.rows for r in rounds)
    stats["vignette_rounds"] = len(rounds)
    stats["vignette_rounds_accepted"] = int(sum(r.accepted for r in estimated))
    if not estimated:
        raise NotEstimableError("vignette not estimable: no pair with enough radial motion")
    v = aggregate([r.estimate for r in estimated], [r.accepted for r in estimated])
    return v, rounds


def calibrate(
    seq: Sequence, provider: MatchProvider, cfg: CalibrationConfig = CalibrationConfig()
) -> CalibrationResult:
    stats: dict = {}
    g, crf_rounds = calibrate_response(seq, provider, cfg, stats)
    v, vig_rounds = calibrate_vignette(seq, g, provider, cfg, stats)
    return CalibrationResult(g, v, crf_rounds, vig_rounds, stats)


def evaluation_pairs(seq: Sequence, cfg: CalibrationConfig = CalibrationConfig()) -> list[tuple[int, int]]:
    """Every exposure-gated CRF pair followed by every vignette pair."""
    crf = [p for grp in select_crf_pairs(seq, cfg.crf_gate) for p in grp]
    vig = [p for grp in select_vignette_pairs(seq, cfg.pairing) for p in grp]
    return crf + vig


def exposure_errors(
    seq: Sequence,
    g: InverseResponse,
    v: VignetteModel,
    provider: MatchProvider,
    cfg: CalibrationConfig = CalibrationConfig(),
) -> list[ValidationReport]:
    """Full-model exposure-ratio re-estimates against metadata for every evaluation pair."""
    reports = []
    for a, b in evaluation_pairs(seq, cfg):
        ms = _prepare(provider(seq.frame(a), seq.frame(b)), cfg)
        if ms.empty:
            continue
        ms = ms.subset(saturation_mask(ms.M1, ms.M2))
        try:
            k_hat = estimate_exposure_ratio(ms, g, v)
        except ValueError:
            continue
        reports.append(validate(k_hat, ms.k, cfg.exposure_tol, ms.pair, Stage.CRF_AND_VIGNETTE))
    return reports
