"""Point correspondences between frame pairs and the block-orientation outlier filter.

A MatchSet stores its matches column-wise (one array per field) because
every consumer works on whole columns; iterating yields Match tuples.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .dataset_io import FrameRecord
from .models import normalized_radius

logger = logging.getLogger(__name__)

ZERO_DISPLACEMENT = 1e-6
_COLUMNS = ("x1", "y1", "x2", "y2", "M1", "M2", "R1", "R2")


class Match(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float
    M1: float
    M2: float
    R1: float
    R2: float


@dataclass(frozen=True, eq=False)
class MatchSet:
    pair: tuple[int, int]
    k: float  # exposure ratio e_a / e_b
    width: int
    height: int
    x1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    M1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    M2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    R1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    R2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    flagged_empty: bool = False
    skipped: int = 0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"exposure ratio must be positive, got {self.k}")
        n = None
        for name in _COLUMNS:
            col = np.asarray(getattr(self, name), dtype=float).ravel()
            if n is None:
                n = col.size
            elif col.size != n:
                raise ValueError(f"column {name} has {col.size} entries, expected {n}")
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return self.x1.size

    def __iter__(self):
        cols = [getattr(self, c) for c in _COLUMNS]
        for row in zip(*cols):
            yield Match(*map(float, row))

    def __getitem__(self, i) -> Match:
        return Match(*(float(getattr(self, c)[i]) for c in _COLUMNS))

    @property
    def empty(self) -> bool:
        return self.flagged_empty or len(self) == 0

    @property
    def radial_displacement(self) -> np.ndarray:
        return np.abs(self.R1 - self.R2)

    def subset(self, mask) -> "MatchSet":
        mask = np.asarray(mask)
        return replace(self, **{c: getattr(self, c)[mask] for c in _COLUMNS})

    def swapped(self) -> "MatchSet":
        """The same correspondences with the two frames' roles exchanged."""
        return replace(
            self,
            pair=(self.pair[1], self.pair[0]),
            k=1.0 / self.k,
            x1=self.x2, y1=self.y2, x2=self.x1, y2=self.y1,
            M1=self.M2, M2=self.M1, R1=self.R2, R2=self.R1,
        )

    def same_as(self, other: "MatchSet") -> bool:
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in _COLUMNS)


def radial_displacement(m: Match) -> float:
    return abs(m.R1 - m.R2)


def sample_bilinear(image: np.ndarray, x, y) -> np.ndarray:
    """Bilinear intensity lookup at (x, y) pixel coordinates, divided by 255."""
    coords = np.vstack([np.asarray(y, float).ravel(), np.asarray(x, float).ravel()])
    return ndimage.map_coordinates(image.astype(float), coords, order=1, mode="nearest") / 255.0


def build_match_set(a: FrameRecord, b: FrameRecord, x1, y1, x2, y2, *, flagged_empty=False, skipped=0) -> MatchSet:
    w, h = a.width, a.height
    x1, y1, x2, y2 = (np.asarray(c, float).ravel() for c in (x1, y1, x2, y2))
    return MatchSet(
        pair=(a.frame_id, b.frame_id),
        k=a.exposure / b.exposure,
        width=w,
        height=h,
        x1=x1, y1=y1, x2=x2, y2=y2,
        M1=sample_bilinear(a.image, x1, y1),
        M2=sample_bilinear(b.image, x2, y2),
        R1=normalized_radius(x1, y1, w, h),
        R2=normalized_radius(x2, y2, w, h),
        flagged_empty=flagged_empty or x1.size == 0,
        skipped=skipped,
    )


def _parse_match_rows(text: str) -> tuple[np.ndarray, int]:
    tokens = text.split()
    body = text.strip()
    n_lines = body.count("\n") + 1 if body else 0
    if "#" not in body and "\n\n" not in body and len(tokens) == 4 * n_lines:
        return np.array(tokens, dtype=float).reshape(-1, 4), 0
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    good = [ln[:4] for ln in lines if len(ln) >= 4]
    return np.array(good, dtype=float).reshape(-1, 4), len(lines) - len(good)


def load_matches(path, a: FrameRecord, b: FrameRecord, min_matches: int = 1) -> MatchSet:
    """Read "x1 y1 x2 y2" rows; out-of-bounds rows are skipped and counted."""
    path = Path(path)
    arr, skipped = _parse_match_rows(path.read_text()) if path.is_file() else (np.zeros((0, 4)), 0)
    w, h = a.width, a.height
    x, y = arr[:, [0, 2]], arr[:, [1, 3]]
    inside = np.all((x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1), axis=1)
    skipped += int((~inside).sum())
    if skipped:
        logger.warning("%s: skipped %d out-of-bounds rows", path, skipped)
    arr = arr[inside]
    return build_match_set(
        a, b, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
        flagged_empty=len(arr) < max(min_matches, 1), skipped=skipped,
    )


def write_matches(path, x1, y1, x2, y2) -> None:
    arr = np.column_stack([x1, y1, x2, y2]).astype(float)
    if np.all(arr == np.round(arr)):
        arr = arr.astype(np.int64)
    # str() of a Python float is its shortest exact repr
    Path(path).write_text(("{} {} {} {}\n" * len(arr)).format(*arr.ravel().tolist()))


def match_filename(a: int, b: int) -> str:
    return f"{a:06d}_{b:06d}.txt"


def block_orientation_filter(ms: MatchSet, grid: tuple[int, int] = (4, 4), bins: int = 36) -> MatchSet:
    """Keep, per image block, only the matches whose motion direction falls in the modal bin."""
    gx, gy = grid
    if gx < 1 or gy < 1 or bins < 2:
        raise ValueError("grid entries must be >= 1 and bins >= 2")
    if len(ms) == 0:
        return ms
    dx, dy = ms.x2 - ms.x1, ms.y2 - ms.y1
    mag = np.hypot(dx, dy)
    moving = mag >= ZERO_DISPLACEMENT
    angle = np.arctan2(dy, dx)
    bin_idx = np.floor((angle + np.pi) / (2 * np.pi) * bins).astype(int) % bins
    bx = np.clip((ms.x1 * gx / ms.width).astype(int), 0, gx - 1)
    by = np.clip((ms.y1 * gy / ms.height).astype(int), 0, gy - 1)
    block = by * gx + bx

    keep = ~moving
    for blk in np.unique(block[moving]):
        members = np.flatnonzero(moving & (block == blk))
        if members.size < 2:
            keep[members] = True
            continue
        counts = np.bincount(bin_idx[members], minlength=bins)
        candidates = np.flatnonzero(counts == counts.max())
        if candidates.size > 1:
            # tie: prefer the bin with the smaller mean displacement
            means = [mag[members][bin_idx[members] == c].mean() for c in candidates]
            modal = candidates[int(np.argmin(means))]
        else:
            modal = candidates[0]
        keep[members[bin_idx[members] == modal]] = True
    return ms.subset(keep)


@dataclass(frozen=True)
class MatcherConfig:
    max_features: int = 400
    patch_radius: int = 4
    min_score: float = 0.8
    ratio: float = 0.8
    min_matches: int = 8
    quality: float = 0.01
    min_distance: int = 3
    max_displacement: float | None = None  # pixels; None searches the whole frame


def detect_corners(image: np.ndarray, cfg: MatcherConfig) -> np.ndarray:
    """Shi-Tomasi corners as an (n, 2) array of integer (x, y), strongest first."""
    img = image.astype(float)
    gx = ndimage.sobel(img, axis=1)
    gy = ndimage.sobel(img, axis=0)
    sxx = ndimage.gaussian_filter(gx * gx, 1.5)
    syy = ndimage.gaussian_filter(gy * gy, 1.5)
    sxy = ndimage.gaussian_filter(gx * gy, 1.5)
    tr = 0.5 * (sxx + syy)
    score = tr - np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy**2, 0.0))
    peak = score.max()
    if peak <= 1e-6:
        return np.zeros((0, 2), dtype=int)
    local_max = score == ndimage.maximum_filter(score, size=2 * cfg.min_distance + 1)
    mask = local_max & (score >= cfg.quality * peak)
    r = cfg.patch_radius
    mask[:r, :] = mask[-r:, :] = False
    mask[:, :r] = mask[:, -r:] = False
    ys, xs = np.nonzero(mask)
    order = np.lexsort((xs, ys, -score[ys, xs]))[: cfg.max_features]
    return np.column_stack([xs[order], ys[order]])


def _descriptors(image: np.ndarray, pts: np.ndarray, r: int) -> np.ndarray:
    img = image.astype(float)
    offs = np.arange(-r, r + 1)
    yy = pts[:, 1, None, None] + offs[None, :, None]
    xx = pts[:, 0, None, None] + offs[None, None, :]
    patches = img[yy, xx].reshape(len(pts), -1)
    patches = patches - patches.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(patches, axis=1, keepdims=True)
    return patches / np.where(norm > 1e-9, norm, np.inf)


def detect_and_match(a: FrameRecord, b: FrameRecord, cfg: MatcherConfig | None = None) -> MatchSet:
    """Corner detection plus zero-mean normalized cross-correlation matching.

    Keeps mutual best matches whose score passes ``cfg.min_score`` and whose
    ZNCC distance passes the ratio test against the second-best candidate.
    """
    cfg = cfg or MatcherConfig()
    if a.image.shape != b.image.shape:
        raise ValueError("frames must share dimensions")
    pa = detect_corners(a.image, cfg)
    pb = detect_corners(b.image, cfg)
    if len(pa) == 0 or len(pb) == 0:
        return build_match_set(a, b, [], [], [], [], flagged_empty=True)

    da = _descriptors(a.image, pa, cfg.patch_radius)
    db = _descriptors(b.image, pb, cfg.patch_radius)
    S = da @ db.T
    if cfg.max_displacement is not None:
        dist = np.hypot(pa[:, None, 0] - pb[None, :, 0], pa[:, None, 1] - pb[None, :, 1])
        S = np.where(dist <= cfg.max_displacement, S, -np.inf)

    best_b = np.argmax(S, axis=1)
    best_a = np.argmax(S, axis=0)
    ia = np.arange(len(pa))
    mutual = best_a[best_b] == ia
    score = S[ia, best_b]
    ok = mutual & (score >= cfg.min_score)
    if S.shape[1] > 1:
        second = np.partition(S, -2, axis=1)[:, -2]
        d_best = np.sqrt(np.maximum(2.0 - 2.0 * score, 0.0))
        d_second = np.sqrt(np.maximum(2.0 - 2.0 * second, 0.0))
        ok &= d_best <= cfg.ratio * d_second
    sel = ia[ok]
    p1 = pa[sel]
    p2 = pb[best_b[sel]]
    return build_match_set(
        a, b, p1[:, 0], p1[:, 1], p2[:, 0], p2[:, 1], flagged_empty=len(sel) < cfg.min_matches
    )
