#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Latent ROI segmentation from sparse codes.

Pipeline: learn a dictionary on the image's own patches, label its atoms,
let every patch whose strongest atom is ridge-valley vote for its block,
normalize, Otsu-threshold, clean up with morphology and take the convex hull
of the largest foreground component.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from skimage import filters, morphology

from . import constants, log
from .atomid import AtomAnalysis, AtomIdConfig, classify_atoms, label_dictionary
from .dictlearn import Dictionary, TrainConfig, encode_patches, learn_dictionary
from .exceptions import ConfigError, InvalidArgument, PreconditionError, RoiFormatError
from .imagecore import GrayImage, PatchConfig, PatchGrid, normalize_columns, patch_windows

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig

Point = Tuple[float, float]
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class MorphConfig:
    """Morphology after binarization.  ``min_area`` None means 2·w²."""
    element: int = constants.MORPH_ELEMENT
    min_area: Optional[int] = None
    hull_of_all: bool = False

    def __post_init__(self):
        if self.element < 1:
            raise ConfigError(f"element must be >= 1, got {self.element}")
        if self.min_area is not None and self.min_area < 0:
            raise ConfigError(f"min_area must be >= 0, got {self.min_area}")


@dataclass(frozen=True)
class SegmentConfig:
    patch: PatchConfig = field(default_factory=PatchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    atoms: AtomIdConfig = field(default_factory=AtomIdConfig)
    morph: MorphConfig = field(default_factory=MorphConfig)
    threads: int = 1

    @classmethod
    def from_run(cls, run: "RunConfig") -> "SegmentConfig":
        return cls(patch=run.patch, train=run.train, atoms=run.atoms, morph=run.morph, threads=run.threads)

    @property
    def min_area(self) -> int:
        if self.morph.min_area is not None:
            return self.morph.min_area
        return 2 * self.patch.patch_size ** 2


@dataclass(frozen=True, eq=False)
class VoteMap:
    width: int
    height: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.height, self.width):
            raise InvalidArgument(f"vote counts shape {counts.shape} does not match {self.width}x{self.height}")
        if np.any(counts < 0):
            raise InvalidArgument("vote counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, width: int, height: int) -> "VoteMap":
        return cls(width=width, height=height, counts=np.zeros((height, width), dtype=np.int64))


# -- // polygon \\ --
def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Point]) -> List[Point]:
    """Monotone chain hull, counter-clockwise (positive cross products), collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        return pts

    lower: List[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class RoiPolygon:
    """Convex CCW polygon, empty or with at least three vertices."""
    vertices: Tuple[Point, ...] = ()

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if 0 < len(verts) < 3:
            raise InvalidArgument(f"a polygon needs at least 3 vertices, got {len(verts)}")
        n = len(verts)
        for i in range(n):
            if _cross(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) < -EDGE_TOL:
                raise InvalidArgument(f"polygon is not convex counter-clockwise at vertex {(i + 1) % n}")
        object.__setattr__(self, "vertices", verts)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_empty(self) -> bool:
        return not self.vertices

    @property
    def area(self) -> float:
        if self.is_empty:
            return 0.0
        xs, ys = np.array(self.vertices).T
        return float(abs(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1))) / 2)

    def contains_points(self, xs, ys) -> np.ndarray:
        """Point-in-polygon, boundary counts as inside.

        For a convex CCW polygon a point is inside iff it is on the left of (or on)
        every edge, which gives the same answer as ray casting with on-edge inclusion.
        """
        xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
        if self.is_empty:
            return np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
        inside = np.ones(np.broadcast(xs, ys).shape, dtype=bool)
        n = len(self.vertices)
        for i in range(n):
            (x0, y0), (x1, y1) = self.vertices[i], self.vertices[(i + 1) % n]
            edge = np.hypot(x1 - x0, y1 - y0)
            inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= -EDGE_TOL * max(edge, 1.0)
        return inside

    def contains(self, x: float, y: float) -> bool:
        return bool(self.contains_points(x, y))

    def to_mask(self, width: int, height: int) -> np.ndarray:
        ys, xs = np.mgrid[0:height, 0:width]
        return self.contains_points(xs, ys)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_roi(roi: RoiPolygon) -> str:
    lines = [f"ROI {len(roi)}"] + [f"{_fmt(x)} {_fmt(y)}" for x, y in roi.vertices]
    return "\n".join(lines) + "\n"


def parse_roi(text: str, name: str = "roi") -> RoiPolygon:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0].split()) != 2 or lines[0].split()[0] != "ROI":
        raise RoiFormatError(f"{name}: first line must be 'ROI <n>'")
    try:
        n = int(lines[0].split()[1])
    except ValueError:
        raise RoiFormatError(f"{name}: bad vertex count {lines[0].split()[1]!r}")
    if n < 0 or len(lines) - 1 != n:
        raise RoiFormatError(f"{name}: header says {n} vertices, found {len(lines) - 1}")
    verts = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        try:
            if len(parts) != 2:
                raise ValueError
            verts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise RoiFormatError(f"{name}: line {i}: expected 'x y', got {ln!r}")
    try:
        return RoiPolygon(tuple(verts))
    except InvalidArgument as e:
        raise RoiFormatError(f"{name}: {e}")


def save_roi(roi: RoiPolygon, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_roi(roi))


def load_roi(path: Union[str, Path]) -> RoiPolygon:
    path = Path(path)
    return parse_roi(path.read_text(), name=str(path))


# -- // pipeline stages \\ --
def _vote(counts: np.ndarray, grid: PatchGrid, D: Dictionary, X: np.ndarray, K: int, threads: int) -> np.ndarray:
    codes = encode_patches(D, X, K, threads=threads)
    ridge = D.ridge_mask
    w = grid.w
    for (x, y), code in zip(grid.origins, codes):
        j = code.dominant()
        if j >= 0 and ridge[j]:
            counts[y:y + w, x:x + w] += 1
    return counts


def build_vote_map(img: GrayImage, D: Dictionary, grid: PatchGrid, K: int, threads: int = 1) -> VoteMap:
    """Per-pixel count of covering patches whose strongest atom is ridge-valley."""
    if not D.is_labeled:
        raise PreconditionError("dictionary atoms are not labeled, run atom identification first")
    if (grid.width, grid.height) != (img.width, img.height):
        raise InvalidArgument(f"grid built for {grid.width}x{grid.height}, image is {img.width}x{img.height}")
    if grid.w * grid.w != D.atom_dim:
        raise InvalidArgument(f"grid patch size {grid.w} does not match atom dimension {D.atom_dim}")
    X = normalize_columns(patch_windows(img, grid).T)
    counts = _vote(np.zeros(img.shape, dtype=np.int64), grid, D, X, K, threads)
    return VoteMap(width=img.width, height=img.height, counts=counts)


def normalize_vote_map(votes: Union[VoteMap, np.ndarray]) -> np.ndarray:
    """Min-max scale to [0, 1].  All-zero stays zero, any other constant map becomes ones."""
    counts = votes.counts if isinstance(votes, VoteMap) else np.asarray(votes)
    counts = counts.astype(np.float64)
    lo, hi = counts.min(), counts.max()
    if hi == lo:
        return np.zeros_like(counts) if hi == 0 else np.ones_like(counts)
    return (counts - lo) / (hi - lo)


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu over 256 bins, returned as the upper edge of the last background bin.

    Binarize with ``value >= threshold``.  Constant input returns the constant.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidArgument("otsu_threshold needs at least one value")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return lo
    center = float(filters.threshold_otsu(v, nbins=256))
    return min(center + (hi - lo) / 512, hi)


def binarize(normalized: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(normalized) >= threshold


def morph_cleanup(mask: np.ndarray, element: int = constants.MORPH_ELEMENT, min_area: int = 0) -> np.ndarray:
    """Close, open, fill holes, then drop 8-connected components under ``min_area`` pixels."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    footprint = np.ones((element, element), dtype=bool)
    out = morphology.binary_closing(mask, footprint)
    out = morphology.binary_opening(out, footprint)
    out = ndimage.binary_fill_holes(out)
    if min_area > 1:
        out = morphology.remove_small_objects(out, min_size=min_area, connectivity=2)
    return out


def _row_extremes(sel: np.ndarray) -> List[Point]:
    pts: List[Point] = []
    for y in np.flatnonzero(sel.any(axis=1)):
        xs = np.flatnonzero(sel[y])
        pts.extend([(xs[0], y), (xs[-1], y)])
    return pts


def roi_polygon(mask: np.ndarray, hull_of_all: bool = False) -> RoiPolygon:
    """Convex hull of the largest 8-connected component (or of all foreground)."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return RoiPolygon()
    if hull_of_all:
        sel = mask
    else:
        sizes = np.bincount(labels.ravel())[1:]
        sel = labels == int(np.argmax(sizes)) + 1
    hull = convex_hull(_row_extremes(sel))
    if len(hull) < 3:
        log.warning(f"foreground component is degenerate ({len(hull)} hull vertices), empty ROI")
        return RoiPolygon()
    return RoiPolygon(tuple(hull))


@dataclass(eq=False)
class SegmentResult:
    dictionary: Dictionary
    analyses: List[AtomAnalysis]
    votes: VoteMap
    normalized: np.ndarray
    threshold: float
    raw_mask: np.ndarray
    mask: np.ndarray
    roi: RoiPolygon

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


def segment_detailed(img: GrayImage, cfg: SegmentConfig = None) -> SegmentResult:
    cfg = cfg or SegmentConfig()
    grid = PatchGrid.for_image(img, cfg.patch)
    X = normalize_columns(patch_windows(img, grid).T)
    log.debug(f"segment {img.name or 'image'}: {img.width}x{img.height}, {len(grid)} patches of {grid.w}x{grid.w}")

    D = learn_dictionary(X, cfg.train, trained_on=img.name)
    analyses = classify_atoms(D, cfg.atoms, threads=cfg.threads)
    D = label_dictionary(D, analyses)

    counts = _vote(np.zeros(img.shape, dtype=np.int64), grid, D, X, cfg.train.sparsity, cfg.threads)
    votes = VoteMap(width=img.width, height=img.height, counts=counts)
    normalized = normalize_vote_map(votes)
    if counts.any():
        threshold = otsu_threshold(normalized)
        raw = binarize(normalized, threshold)
    else:
        # no ridge-valley evidence anywhere
        threshold, raw = 1.0, np.zeros(img.shape, dtype=bool)
    log.debug(f"segment: {D.ridge_count} ridge atoms, max votes {int(counts.max())}, otsu {threshold:.4f}")

    mask = morph_cleanup(raw, cfg.morph.element, cfg.min_area)
    roi = roi_polygon(mask, hull_of_all=cfg.morph.hull_of_all)
    log.debug(f"segment: mask {mask.mean():.3f} of image, roi {len(roi)} vertices, area {roi.area:.0f}")
    return SegmentResult(
        dictionary=D, analyses=analyses, votes=votes, normalized=normalized,
        threshold=threshold, raw_mask=raw, mask=mask, roi=roi,
    )


def segment(img: GrayImage, cfg: SegmentConfig = None) -> RoiPolygon:
    return segment_detailed(img, cfg).roi


def vote_map_image(votes: VoteMap) -> GrayImage:
    top = int(votes.counts.max())
    scaled = np.zeros_like(votes.counts) if top == 0 else np.rint(votes.counts * 255.0 / top)
    return GrayImage.from_array(scaled.astype(np.uint8), name="votes")


def mask_image(mask: np.ndarray) -> GrayImage:
    return GrayImage.from_array(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), name="mask")
