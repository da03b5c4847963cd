#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Minutia model, the ``x y orientation type`` text format, ROI masking and a baseline extractor.

Orientations are degrees in [0, 360) measured with ``atan2(dy, dx)`` in the
image's own (x, y) frame, the same frame the matcher rotates in.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from skimage import morphology

from . import constants, log
from .constants import MinutiaType
from .exceptions import ConfigError, InvalidArgument, MinutiaeParseError
from .imagecore import GrayImage
from .segmentation import RoiPolygon

# 8-neighborhood, clockwise from the top-left pixel, as (dy, dx)
CLOCKWISE = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def wrap_degrees(a: float) -> float:
    a = float(a) % 360.0
    return 0.0 if a >= 360.0 else a


def angle_diff(a, b):
    """Circular difference in degrees, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) % 360.0
    return np.minimum(d, 360.0 - d)


@dataclass(frozen=True)
class Minutia:
    x: float
    y: float
    orientation: float
    mtype: MinutiaType = MinutiaType.unknown

    def __post_init__(self):
        if not 0.0 <= self.orientation < 360.0:
            raise InvalidArgument(f"orientation {self.orientation} outside [0, 360)")
        try:
            object.__setattr__(self, "mtype", MinutiaType(self.mtype))
        except ValueError:
            raise InvalidArgument(f"minutia type must be one of E, B, U, got {self.mtype!r}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "orientation", float(self.orientation))


@dataclass(frozen=True)
class MinutiaSet:
    id: str
    points: Tuple[Minutia, ...] = ()

    def __post_init__(self):
        points = tuple(self.points)
        seen = set()
        for i, m in enumerate(points):
            if m in seen:
                raise InvalidArgument(f"{self.id}: duplicate minutia {m} at position {i}")
            seen.add(m)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Minutia]:
        return iter(self.points)

    def __getitem__(self, i: int) -> Minutia:
        return self.points[i]

    @property
    def xy(self) -> np.ndarray:
        return np.array([(m.x, m.y) for m in self.points], dtype=np.float64).reshape(-1, 2)

    @property
    def orientations(self) -> np.ndarray:
        return np.array([m.orientation for m in self.points], dtype=np.float64)

    @property
    def types(self) -> List[MinutiaType]:
        return [m.mtype for m in self.points]

    def subset(self, indices: Sequence[int], id: str = None) -> "MinutiaSet":
        return MinutiaSet(id=self.id if id is None else id, points=tuple(self.points[i] for i in indices))

    def renamed(self, id: str) -> "MinutiaSet":
        return MinutiaSet(id=id, points=self.points)


# -- // text format \\ --
def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_minutiae(ms: MinutiaSet) -> str:
    lines = [f"# {constants.MINUTIAE_FORMAT_VERSION} {ms.id}".rstrip(), "# x y orientation type"]
    lines += [f"{_num(m.x)} {_num(m.y)} {_num(m.orientation)} {m.mtype.value}" for m in ms]
    return "\n".join(lines) + "\n"


def parse_minutiae(text: str, id: str = "", path: str = None) -> MinutiaSet:
    points, seen = [], set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise MinutiaeParseError(f"expected 'x y orientation type', got {line!r}", line_no, path)
        try:
            x, y, o = (float(p) for p in parts[:3])
        except ValueError:
            raise MinutiaeParseError(f"non-numeric field in {line!r}", line_no, path)
        if not all(map(math.isfinite, (x, y, o))):
            raise MinutiaeParseError(f"non-finite value in {line!r}", line_no, path)
        if x < 0 or y < 0:
            raise MinutiaeParseError(f"negative coordinate in {line!r}", line_no, path)
        if not 0 <= o < 360:
            raise MinutiaeParseError(f"orientation {parts[2]} outside [0, 360)", line_no, path)
        if parts[3] not in {t.value for t in MinutiaType}:
            raise MinutiaeParseError(f"type must be E, B or U, got {parts[3]!r}", line_no, path)
        m = Minutia(x, y, o, MinutiaType(parts[3]))
        if m in seen:
            raise MinutiaeParseError(f"duplicate minutia {line!r}", line_no, path)
        seen.add(m)
        points.append(m)
    return MinutiaSet(id=id, points=tuple(points))


def save_minutiae(ms: MinutiaSet, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_minutiae(ms))


def load_minutiae(path: Union[str, Path], id: str = None) -> MinutiaSet:
    path = Path(path)
    return parse_minutiae(path.read_text(), id=path.stem if id is None else id, path=str(path))


def mask_by_roi(ms: MinutiaSet, roi: Optional[RoiPolygon]) -> MinutiaSet:
    """Minutiae inside or on the polygon.  ``None`` means the whole image, an empty polygon keeps nothing."""
    if roi is None:
        return ms
    if roi.is_empty or not len(ms):
        return MinutiaSet(id=ms.id)
    xy = ms.xy
    keep = np.flatnonzero(roi.contains_points(xy[:, 0], xy[:, 1]))
    return ms.subset(keep)


# -- // baseline extractor \\ --
@dataclass(frozen=True)
class ExtractorConfig:
    block: int = 16
    min_std: float = 5.0
    orient_sigma: float = 5.0
    smooth_length: int = 9
    border: int = 12
    min_fragment: int = 12
    trace: int = 10
    spur_length: int = 8
    min_distance: float = 6.0

    def __post_init__(self):
        for name in ("block", "smooth_length", "trace"):
            if getattr(self, name) < 1:
                raise ConfigError(f"extractor {name} must be >= 1, got {getattr(self, name)}")
        for name in ("min_std", "orient_sigma", "border", "min_fragment", "spur_length", "min_distance"):
            if getattr(self, name) < 0:
                raise ConfigError(f"extractor {name} must be >= 0, got {getattr(self, name)}")


def local_normalize(f: np.ndarray, block: int) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-mean unit-variance image over a ``block`` window, plus the local standard deviation."""
    mean = ndimage.uniform_filter(f, size=block, mode="reflect")
    sq = ndimage.uniform_filter(f * f, size=block, mode="reflect")
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    return (f - mean) / np.maximum(std, 1e-6), std


def ridge_orientation(norm: np.ndarray, sigma: float) -> np.ndarray:
    """Along-ridge direction in radians [0, π) from the smoothed structure tensor."""
    gx = ndimage.sobel(norm, axis=1)
    gy = ndimage.sobel(norm, axis=0)
    gxx = ndimage.gaussian_filter(gx * gx, sigma)
    gyy = ndimage.gaussian_filter(gy * gy, sigma)
    gxy = ndimage.gaussian_filter(gx * gy, sigma)
    across = 0.5 * np.arctan2(2 * gxy, gxx - gyy)
    return (across + np.pi / 2) % np.pi


def _line_kernel(angle: float, length: int) -> np.ndarray:
    half = length // 2
    k = np.zeros((2 * half + 1, 2 * half + 1))
    for t in np.linspace(-half, half, 4 * length + 1):
        k[int(round(half + t * math.sin(angle))), int(round(half + t * math.cos(angle)))] = 1.0
    return k / k.sum()


def oriented_smooth(norm: np.ndarray, orient: np.ndarray, length: int, bins: int = 8) -> np.ndarray:
    """Average along the local ridge direction, quantized to ``bins`` line kernels."""
    idx = np.floor(orient / np.pi * bins + 0.5).astype(int) % bins
    out = np.zeros_like(norm)
    for b in range(bins):
        sel = idx == b
        if sel.any():
            out[sel] = ndimage.convolve(norm, _line_kernel(b * np.pi / bins, length), mode="nearest")[sel]
    return out


def crossing_numbers(skel: np.ndarray) -> np.ndarray:
    """Crossing number ½Σ|Pₖ − Pₖ₊₁| over the clockwise 8-neighborhood, 0 off the skeleton."""
    s = np.pad(skel.astype(np.int8), 1)
    h, w = skel.shape
    ring = [s[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] for dy, dx in CLOCKWISE]
    cn = sum(np.abs(ring[k] - ring[(k + 1) % 8]) for k in range(8)) // 2
    return np.where(skel, cn, 0)


def _branch_starts(skel: np.ndarray, y: int, x: int) -> List[Tuple[int, int]]:
    """One skeleton pixel per run of set neighbors around (y, x), preferring 4-neighbors."""
    h, w = skel.shape
    on = [0 <= y + dy < h and 0 <= x + dx < w and bool(skel[y + dy, x + dx]) for dy, dx in CLOCKWISE]
    if all(on):
        return []
    start = on.index(False)
    runs, current = [], []
    for k in range(1, 9):
        i = (start + k) % 8
        if on[i]:
            current.append(i)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    starts = []
    for run in runs:
        straight = [i for i in run if 0 in CLOCKWISE[i]]
        dy, dx = CLOCKWISE[(straight or run)[0]]
        starts.append((y + dy, x + dx))
    return starts


def _trace(skel: np.ndarray, start: Tuple[int, int], blocked: set, steps: int) -> List[Tuple[int, int]]:
    h, w = skel.shape
    path, visited = [start], set(blocked) | {start}
    cy, cx = start
    for _ in range(steps - 1):
        nxt = None
        for dy, dx in sorted(CLOCKWISE, key=lambda d: abs(d[0]) + abs(d[1])):
            ny, nx = cy + dy, cx + dx
            if 0 <= ny < h and 0 <= nx < w and skel[ny, nx] and (ny, nx) not in visited:
                nxt = (ny, nx)
                break
        if nxt is None:
            break
        visited.add(nxt)
        path.append(nxt)
        cy, cx = nxt
    return path


def _direction(y: int, x: int, path: List[Tuple[int, int]]) -> float:
    ty, tx = path[-1]
    return math.degrees(math.atan2(ty - y, tx - x))


def _branches(skel: np.ndarray, y: int, x: int, steps: int) -> List[List[Tuple[int, int]]]:
    starts = _branch_starts(skel, y, x)
    blocked = {(y, x)} | set(starts)
    return [_trace(skel, s, blocked - {s}, steps) for s in starts]


def _bifurcation_angle(y: int, x: int, branches: List[List[Tuple[int, int]]]) -> float:
    """Opposite of the stem, i.e. into the valley between the two closest branches."""
    angles = [_direction(y, x, b) for b in branches[:3]]
    pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
    closest = min(pairs, key=lambda p: (float(angle_diff(angles[p[0]], angles[p[1]])), p))
    return wrap_degrees(angles[closest[2]] + 180.0)


def extract_minutiae(img: GrayImage, roi: Optional[RoiPolygon] = None, cfg: ExtractorConfig = None) -> MinutiaSet:
    """Endings (crossing number 1) and bifurcations (3) of the thinned ridge map.

    ``roi=None`` means the whole image.
    """
    cfg = cfg or ExtractorConfig()
    f = img.as_float()
    norm, std = local_normalize(f, cfg.block)
    valid = std >= cfg.min_std
    if not valid.any():
        log.debug(f"extract_minutiae {img.name or 'image'}: no textured area")
        return MinutiaSet(id=img.name)

    orient = ridge_orientation(norm, cfg.orient_sigma)
    smooth = oriented_smooth(norm, orient, cfg.smooth_length)
    ridges = (smooth < 0) & valid
    skel = morphology.skeletonize(ridges)
    if cfg.min_fragment > 1:
        skel = morphology.remove_small_objects(skel, min_size=cfg.min_fragment, connectivity=2)

    cn = crossing_numbers(skel)
    inner = valid.copy()
    if cfg.border:
        inner = ndimage.binary_erosion(valid, iterations=cfg.border, border_value=0)
    found: List[Tuple[int, int, float, MinutiaType]] = []
    ends = [(y, x) for y, x in zip(*np.nonzero((cn == 1) & inner))]
    forks = {(y, x) for y, x in zip(*np.nonzero((cn == 3) & inner))}
    dropped_forks = set()

    for y, x in ends:
        branches = _branches(skel, y, x, cfg.trace)
        if not branches:
            continue
        path = branches[0]
        spur = [p for p in path[:cfg.spur_length] if p in forks or cn[p] == 3]
        if spur:
            # short spur off a ridge, not a real ending
            dropped_forks.update(spur)
            continue
        found.append((x, y, wrap_degrees(_direction(y, x, path)), MinutiaType.ending))

    for y, x in sorted(forks - dropped_forks):
        branches = _branches(skel, y, x, cfg.trace)
        if len(branches) < 3:
            continue
        found.append((x, y, _bifurcation_angle(y, x, branches), MinutiaType.bifurcation))

    if cfg.min_distance > 0:
        found = _drop_broken_ridges(found, cfg.min_distance)

    found.sort(key=lambda m: (m[1], m[0], m[3].value))
    points = tuple(Minutia(float(x), float(y), o, t) for x, y, o, t in found)
    ms = MinutiaSet(id=img.name, points=points)
    log.debug(
        f"extract_minutiae {img.name or 'image'}: {sum(t is MinutiaType.ending for *_, t in found)} endings, "
        f"{sum(t is MinutiaType.bifurcation for *_, t in found)} bifurcations"
    )
    return mask_by_roi(ms, roi)


def _drop_broken_ridges(found, min_distance: float):
    """Drop pairs of endings closer than ``min_distance`` (a ridge gap, not two real endings)."""
    ends = [i for i, m in enumerate(found) if m[3] is MinutiaType.ending]
    drop = set()
    for a_pos, a in enumerate(ends):
        for b in ends[a_pos + 1:]:
            (xa, ya, *_), (xb, yb, *_) = found[a], found[b]
            if math.hypot(xa - xb, ya - yb) < min_distance:
                drop.update((a, b))
    return [m for i, m in enumerate(found) if i not in drop]
