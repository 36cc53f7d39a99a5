"""Sequence loading and estimate/correction output in a TumMono-like layout.

Layout::

    <seq>/images/000000.png   8-bit grayscale frames (any zero padding accepted)
    <seq>/times.txt           "id timestamp_sec exposure_ms" per line
    <seq>/pcalib.txt          optional, 256 inverse-response samples
    <seq>/vignette.png        optional, 16-bit vignette image
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError
from .models import InverseResponse, VignetteModel

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".pgm", ".bmp")
VIGNETTE_CLAMP = 1e-3


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_id: int
    timestamp: float
    exposure: float  # milliseconds
    image: np.ndarray

    def __post_init__(self):
        if not self.exposure > 0:
            raise DatasetError(f"frame {self.frame_id}: exposure must be positive, got {self.exposure}")
        img = np.asarray(self.image)
        if img.ndim != 2:
            raise DatasetError(f"frame {self.frame_id}: expected a 2-D grayscale image")
        if img.dtype != np.uint8:
            if img.size and (img.min() < 0 or img.max() > 255):
                raise DatasetError(f"frame {self.frame_id}: intensities outside [0, 255]")
            img = img.astype(np.uint8)
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.timestamp == other.timestamp
            and self.exposure == other.exposure
            and np.array_equal(self.image, other.image)
        )


@dataclass(frozen=True, eq=False)
class Sequence:
    frames: list[FrameRecord]
    width: int
    height: int
    source_path: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [f.frame_id for f in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise DatasetError("frame ids must be strictly increasing")
        for f in self.frames:
            if f.image.shape != (self.height, self.width):
                raise DatasetError(
                    f"frame {f.frame_id} has size {f.width}x{f.height}, expected {self.width}x{self.height}"
                )
        object.__setattr__(self, "_index", {fid: i for i, fid in enumerate(ids)})

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __eq__(self, other):
        if not isinstance(other, Sequence):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and self.frames == other.frames

    def frame(self, frame_id: int) -> FrameRecord:
        return self.frames[self._index[frame_id]]

    @property
    def exposures(self) -> np.ndarray:
        return np.array([f.exposure for f in self.frames])

    @property
    def frame_ids(self) -> list[int]:
        return [f.frame_id for f in self.frames]


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    """Tabulated inverse response: samples[i] is the irradiance for intensity i."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (256,):
            raise DatasetError(f"expected 256 values, found {s.size}")
        if np.any(np.diff(s) < 0):
            logger.warning("response curve is not non-decreasing")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True, eq=False)
class VignetteImage:
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "I;16", "I;16B", "I", "P"):
            im = im.convert("L")
        return np.asarray(im)


def _index_images(images_dir: Path) -> dict[int, Path]:
    out = {}
    for p in images_dir.iterdir():
        if p.suffix.lower() in IMAGE_SUFFIXES and p.stem.isdigit():
            out[int(p.stem)] = p
    return out


def read_times(path: Path) -> list[tuple[int, float, float]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise DatasetError(f"{path}:{lineno}: expected 'id timestamp exposure_ms'")
            try:
                rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return rows


def load_sequence(seq_dir) -> Sequence:
    seq_dir = Path(seq_dir)
    times_path = seq_dir / "times.txt"
    if not times_path.is_file():
        raise DatasetError(f"missing {times_path}")
    rows = read_times(times_path)
    if not rows:
        raise DatasetError("empty sequence")
    images_dir = seq_dir / "images"
    if not images_dir.is_dir():
        raise DatasetError(f"missing {images_dir}")
    files = _index_images(images_dir)

    frames = []
    for fid, ts, exp in sorted(rows, key=lambda r: r[0]):
        if not exp > 0:
            raise DatasetError(f"frame {fid}: non-positive exposure {exp}")
        if fid not in files:
            raise DatasetError(f"missing image for frame {fid}")
        img = _read_image(files[fid])
        if img.dtype != np.uint8:
            raise DatasetError(f"frame {fid}: expected an 8-bit image, got {img.dtype}")
        frames.append(FrameRecord(fid, ts, exp, img))

    h, w = frames[0].image.shape
    for f in frames:
        if f.image.shape != (h, w):
            raise DatasetError(f"frame {f.frame_id}: dimension mismatch {f.image.shape[::-1]} vs {(w, h)}")
    return Sequence(frames, w, h, str(seq_dir))


def write_sequence(seq: Sequence, seq_dir) -> None:
    seq_dir = Path(seq_dir)
    (seq_dir / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for f in seq.frames:
        Image.fromarray(f.image).save(seq_dir / "images" / f"{f.frame_id:06d}.png")
        lines.append(f"{f.frame_id} {f.timestamp!r} {f.exposure!r}\n")
    (seq_dir / "times.txt").write_text("".join(lines))


def _read_reals(path: Path) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in Path(path).read_text().split()])
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise DatasetError(f"{path}: non-finite value")
    return vals


def load_response_curve(path) -> ResponseCurve:
    vals = _read_reals(Path(path))
    if vals.size != 256:
        raise DatasetError(f"expected 256 values, found {vals.size}")
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        raise DatasetError(f"{path}: constant response curve")
    return ResponseCurve((vals - lo) / (hi - lo))


def load_vignette_image(path, shape: tuple[int, int] | None = None) -> VignetteImage:
    """Load a vignette image normalized by its maximum; ``shape`` is (height, width)."""
    img = _read_image(Path(path)).astype(float)
    if img.ndim != 2:
        raise DatasetError(f"{path}: expected a single-channel image")
    if shape is not None and img.shape != tuple(shape):
        raise DatasetError(f"{path}: vignette size {img.shape[::-1]} does not match sequence {tuple(shape)[::-1]}")
    if img.max() <= 0:
        raise DatasetError(f"{path}: empty vignette image")
    return VignetteImage(img / img.max())


def to_uint16(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_vignette_image(values: np.ndarray, path) -> None:
    Image.fromarray(to_uint16(values)).save(path)


def write_response_table(g: InverseResponse, path) -> None:
    table = 255.0 * g.table(256)
    Path(path).write_text(" ".join(f"{x:.17g}" for x in table) + "\n")


def write_vignette_coeffs(v: VignetteModel, path) -> None:
    Path(path).write_text("".join(f"{x:.17g}\n" for x in v.coeffs))


def read_vignette_coeffs(path) -> VignetteModel:
    vals = _read_reals(Path(path))
    if vals.size != 3:
        raise DatasetError(f"{path}: expected 3 vignette coefficients, found {vals.size}")
    return VignetteModel.from_coeffs(vals)


def write_response_coeffs(g: InverseResponse, path) -> None:
    Path(path).write_text("".join(f"{x:.17g}\n" for x in g.coeffs))


def read_response_coeffs(path) -> InverseResponse:
    vals = _read_reals(Path(path))
    if vals.size != 3:
        raise DatasetError(f"{path}: expected 3 response coefficients, found {vals.size}")
    return InverseResponse.from_coeffs(vals)


def write_estimates(g: InverseResponse, v: VignetteModel, out_dir, width: int, height: int) -> None:
    """Write pcalib_est.txt, vignette_est.txt, vignette_est.png and crf_est.txt."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_response_table(g, out_dir / "pcalib_est.txt")
        write_vignette_coeffs(v, out_dir / "vignette_est.txt")
        write_response_coeffs(g, out_dir / "crf_est.txt")
        write_vignette_image(v.render(width, height), out_dir / "vignette_est.png")
    except OSError as exc:
        raise DatasetError(f"cannot write estimates to {out_dir}: {exc}") from exc


def read_estimates(est_dir) -> tuple[InverseResponse, VignetteModel]:
    est_dir = Path(est_dir)
    for name in ("crf_est.txt", "vignette_est.txt"):
        if not (est_dir / name).is_file():
            raise DatasetError(f"missing {est_dir / name}")
    return read_response_coeffs(est_dir / "crf_est.txt"), read_vignette_coeffs(est_dir / "vignette_est.txt")


def correct_frame(
    frame: FrameRecord, g: InverseResponse, v: VignetteModel, divide_exposure: bool = False
) -> np.ndarray:
    """Map raw intensities back to irradiance: g(M/255) / V(R), optionally per second of exposure."""
    vig = np.maximum(v.render(frame.width, frame.height), VIGNETTE_CLAMP)
    out = g(frame.image / 255.0) / vig
    if divide_exposure:
        out = out / (frame.exposure / 1000.0)
    return out


def correction_scale(seq: Sequence, g: InverseResponse, v: VignetteModel, divide_exposure: bool) -> float:
    """Upper bound of correct_frame output over the sequence, used for 16-bit export."""
    gmax = float(np.max(g.table(256)))
    vmin = float(np.min(np.maximum(v.render(seq.width, seq.height), VIGNETTE_CLAMP)))
    scale = gmax / vmin
    if divide_exposure:
        scale /= float(np.min(seq.exposures)) / 1000.0
    if not (scale > 0 and math.isfinite(scale)):
        raise DatasetError("degenerate correction scale")
    return scale


def write_corrected(seq: Sequence, g: InverseResponse, v: VignetteModel, out_dir, divide_exposure: bool = True) -> float:
    """Write 16-bit corrected frames plus scale.txt; pixel/65535 * scale is the corrected value."""
    out_dir = Path(out_dir)
    scale = correction_scale(seq, g, v, divide_exposure)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for f in seq.frames:
            vals = correct_frame(f, g, v, divide_exposure) / scale
            Image.fromarray(to_uint16(vals)).save(out_dir / f"{f.frame_id:06d}.png")
        (out_dir / "scale.txt").write_text(
            f"scale {scale:.17g}\ndivide_exposure {int(divide_exposure)}\n"
        )
    except OSError as exc:
        raise DatasetError(f"cannot write corrected frames to {out_dir}: {exc}") from exc
    return scale
