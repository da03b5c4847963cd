#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Deterministic synthetic latents with ground truth.

Ridges are ``cos`` fringes of a phase field inside a convex region; planted
minutiae are phase singularities in that field.  Structured noise (lines,
glyph-like stamps, speckle) is drawn with Pillow over a blurred noise
background.  Everything is driven by one seed.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from PIL import Image, ImageDraw
from scipy import ndimage

from . import constants, log
from .constants import MinutiaType
from .exceptions import InvalidArgument, SpecError
from .gamatch import AffineParams, transform_set
from .identify import Gallery, LatentQuery
from .imagecore import GrayImage, save_pgm
from .minutiae import Minutia, MinutiaSet, format_minutiae, save_minutiae, wrap_degrees
from .segmentation import RoiPolygon, convex_hull

Point = Tuple[float, float]
REGION_PRESETS = ("left-half", "full", "none")
SNAP_ROUNDS = 6
MID_GRAY = 128.0


def _pairs(value, name: str) -> Tuple[float, float]:
    try:
        a, b = (float(v) for v in value)
    except (TypeError, ValueError):
        raise SpecError(f"{name} must be a pair of numbers, got {value!r}")
    return a, b


def _planted(value) -> Tuple[Tuple[float, float, str], ...]:
    out = []
    for i, m in enumerate(value or ()):
        try:
            if isinstance(m, dict):
                x, y, t = m["x"], m["y"], m.get("type", "U")
            else:
                x, y, *rest = m
                t = rest[0] if rest else "U"
            out.append((float(x), float(y), MinutiaType(str(t).upper()).value))
        except (KeyError, TypeError, ValueError):
            raise SpecError(f"minutiae[{i}]: expected [x, y, E|B|U] or {{x, y, type}}, got {m!r}")
    return tuple(out)


@dataclass(frozen=True)
class SynthSpec:
    """``region`` is a vertex list or one of ``left-half``, ``full``, ``none``.

    ``orientation`` is the wave-vector direction in degrees at the image center,
    ``gradient`` its change in degrees per pixel along x and y.
    """
    width: int = 256
    height: int = 256
    region: Union[str, Tuple[Point, ...]] = "left-half"
    period: float = 8.0
    orientation: float = 0.0
    gradient: Tuple[float, float] = (0.0, 0.0)
    contrast: float = 80.0
    background: float = 12.0
    minutiae: Tuple[Tuple[float, float, str], ...] = ()
    lines: int = 0
    glyphs: int = 0
    speckle: float = 0.0
    blur: float = 1.0
    overlap: bool = False
    seed: int = constants.SEED

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise SpecError(f"image must be at least 8x8, got {self.width}x{self.height}")
        if isinstance(self.region, str):
            if self.region not in REGION_PRESETS:
                raise SpecError(f"region must be a vertex list or one of {', '.join(REGION_PRESETS)}, got {self.region!r}")
        else:
            object.__setattr__(self, "region", tuple(_pairs(v, "region vertex") for v in self.region))
        object.__setattr__(self, "gradient", _pairs(self.gradient, "gradient"))
        object.__setattr__(self, "minutiae", _planted(self.minutiae))
        for name in ("lines", "glyphs"):
            if getattr(self, name) < 0:
                raise SpecError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.speckle <= 1.0:
            raise SpecError(f"speckle must be a fraction in [0, 1], got {self.speckle}")
        if not 0.0 <= self.blur <= 10.0:
            raise SpecError(f"blur sigma must be in [0, 10], got {self.blur}")
        if not 0.0 < self.contrast <= MID_GRAY or self.background < 0:
            raise SpecError(f"contrast must be in (0, 128] and background >= 0, got {self.contrast}, {self.background}")

        region = self.region_polygon()
        if not region.is_empty:
            lo, hi = constants.VALID_PERIOD
            if not lo <= self.period <= hi:
                raise SpecError(f"ridge period {self.period} outside the ridge-valley band [{lo}, {hi}]")
        for x, y, _ in self.minutiae:
            if not region.contains(x, y):
                raise SpecError(f"planted minutia ({x}, {y}) is outside the ridge region")

    def region_polygon(self) -> RoiPolygon:
        w, h = self.width - 1, self.height - 1
        if self.region == "none":
            return RoiPolygon()
        if self.region == "full":
            return RoiPolygon(((0, 0), (w, 0), (w, h), (0, h)))
        if self.region == "left-half":
            half = self.width // 2 - 1
            return RoiPolygon(((0, 0), (half, 0), (half, h), (0, h)))
        hull = convex_hull(self.region)
        if len(hull) < 3 or len(hull) != len(set(self.region)):
            raise SpecError(f"region vertices must form a convex polygon, got {list(self.region)}")
        return RoiPolygon(tuple(hull))

    def as_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["region"] = self.region if isinstance(self.region, str) else [list(v) for v in self.region]
        out["gradient"] = list(self.gradient)
        out["minutiae"] = [list(m) for m in self.minutiae]
        return out


def load_spec(path: Union[str, Path]) -> SynthSpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise SpecError(f"{path}: {e}")
    if not isinstance(data, dict):
        raise SpecError(f"{path}: expected a mapping of spec keys")
    names = {f.name for f in dataclasses.fields(SynthSpec)}
    bad = sorted(set(data) - names)
    if bad:
        raise SpecError(f"{path}: unknown key(s) {', '.join(bad)}, valid: {', '.join(sorted(names))}")
    try:
        return SynthSpec(**data)
    except SpecError:
        raise
    except (InvalidArgument, TypeError, ValueError) as e:
        raise SpecError(f"{path}: {e}")


@dataclass(frozen=True, eq=False)
class SynthTruth:
    mask: np.ndarray
    minutiae: MinutiaSet
    region: RoiPolygon
    spec: SynthSpec


# -- // ridge field \\ --
class _PhaseField:
    """Fringe phase: linear wave plus one unit spiral per planted minutia."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.k = 2 * math.pi / spec.period
        self.cx, self.cy = (spec.width - 1) / 2, (spec.height - 1) / 2
        self.centers: List[Point] = []

    def theta(self, x, y):
        gx, gy = self.spec.gradient
        return np.radians(self.spec.orientation + gx * (x - self.cx) + gy * (y - self.cy))

    def linear(self, x, y):
        th = self.theta(x, y)
        return self.k * ((x - self.cx) * np.cos(th) + (y - self.cy) * np.sin(th))

    def __call__(self, x, y, skip: Optional[int] = None):
        phase = self.linear(x, y)
        for i, (px, py) in enumerate(self.centers):
            if i != skip:
                phase = phase + np.arctan2(y - py, x - px)
        return phase

    def branch_direction(self, x: float, y: float) -> float:
        """Direction of the extra fringe that starts at a singularity at (x, y)."""
        return float(self.theta(x, y)) - math.pi / 2

    def branch_phase(self, i: int) -> float:
        x, y = self.centers[i]
        return float(self(x, y, skip=i)) + self.branch_direction(x, y)


def _wrap_pi(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _snap(field: _PhaseField, planted: Sequence[Tuple[float, float, str]]) -> None:
    """Move each singularity along the wave vector until its branch is a ridge (E) or a valley (B)."""
    for _ in range(SNAP_ROUNDS):
        for i, (_, _, t) in enumerate(planted):
            if t == MinutiaType.unknown.value:
                continue
            target = 0.0 if t == MinutiaType.ending.value else math.pi
            x, y = field.centers[i]
            step = _wrap_pi(target - field.branch_phase(i)) / field.k
            th = float(field.theta(x, y))
            field.centers[i] = (x + step * math.cos(th), y + step * math.sin(th))
    field.centers = [(round(x, 2), round(y, 2)) for x, y in field.centers]


def _planted_truth(field: _PhaseField, region: RoiPolygon, id: str) -> MinutiaSet:
    points = []
    for i, (x, y) in enumerate(field.centers):
        mtype = MinutiaType.ending if math.cos(field.branch_phase(i)) > 0 else MinutiaType.bifurcation
        o = round(math.degrees(field.branch_direction(x, y)), 2)
        points.append(Minutia(x, y, wrap_degrees(o), mtype))
    return MinutiaSet(id=id, points=tuple(points))


# -- // noise layers \\ --
def _noise_background(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    bg = ndimage.gaussian_filter(rng.uniform(0, 255, size=(spec.height, spec.width)), 2.0)
    std = bg.std()
    if std == 0:
        return np.full(bg.shape, MID_GRAY)
    return MID_GRAY + (bg - bg.mean()) / std * spec.background


def _structured_layer(spec: SynthSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Lines and glyph stamps as (values, drawn) arrays."""
    size = (spec.width, spec.height)
    layer, alpha = Image.new("L", size, 0), Image.new("L", size, 0)
    draw, adraw = ImageDraw.Draw(layer), ImageDraw.Draw(alpha)

    def stroke(xy, fill, width):
        draw.line(xy, fill=fill, width=width)
        adraw.line(xy, fill=255, width=width)

    for _ in range(spec.lines):
        x0, x1 = rng.uniform(0, spec.width, 2)
        y0, y1 = rng.uniform(0, spec.height, 2)
        stroke([(x0, y0), (x1, y1)], int(rng.choice([20, 235])), int(rng.integers(1, 4)))

    for _ in range(spec.glyphs):
        gw, gh = (int(v) for v in rng.integers(10, 29, 2))
        x0 = float(rng.uniform(0, max(spec.width - gw, 1)))
        y0 = float(rng.uniform(0, max(spec.height - gh, 1)))
        ink = int(rng.choice([25, 230]))
        box = [(x0, y0), (x0 + gw, y0 + gh)]
        draw.rectangle(box, outline=ink, width=1)
        adraw.rectangle(box, outline=255, width=1)
        for _ in range(int(rng.integers(2, 5))):
            if rng.random() < 0.5:
                yy = y0 + rng.uniform(2, gh - 2)
                stroke([(x0 + 2, yy), (x0 + gw - 2, yy)], ink, 1)
            else:
                xx = x0 + rng.uniform(2, gw - 2)
                stroke([(xx, y0 + 2), (xx, y0 + gh - 2)], ink, 1)

    return np.asarray(layer, dtype=np.float64), np.asarray(alpha) > 0


def generate(spec: SynthSpec, id: str = "synth") -> Tuple[GrayImage, SynthTruth]:
    rng = np.random.default_rng(spec.seed)
    region = spec.region_polygon()
    mask = region.to_mask(spec.width, spec.height)

    field = _PhaseField(spec)
    field.centers = [(x, y) for x, y, _ in spec.minutiae]
    _snap(field, spec.minutiae)
    inside = [region.contains(x, y) for x, y in field.centers]
    if not all(inside):
        log.warning(f"{id}: {inside.count(False)} planted minutiae left the ridge region when snapped, dropped")
        field.centers = [c for c, ok in zip(field.centers, inside) if ok]
    truth_ms = _planted_truth(field, region, id)

    img = _noise_background(spec, rng)
    if mask.any():
        ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
        ridges = MID_GRAY - spec.contrast * np.cos(field(xs, ys))
        img = np.where(mask, ridges, img)

    noisy = np.ones_like(mask) if spec.overlap else ~mask
    values, drawn = _structured_layer(spec, rng)
    drawn &= noisy
    img = np.where(drawn, values, img)
    if spec.speckle > 0:
        hit = (rng.random(img.shape) < spec.speckle) & noisy
        salt = rng.random(img.shape) < 0.5
        img = np.where(hit, np.where(salt, 255.0, 0.0), img)
    if spec.blur > 0:
        img = ndimage.gaussian_filter(img, spec.blur)

    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    log.debug(
        f"generate {id}: {spec.width}x{spec.height}, region {mask.mean():.2f} of image, "
        f"{len(truth_ms)} planted minutiae, {spec.lines} lines, {spec.glyphs} glyphs"
    )
    return GrayImage.from_array(pixels, name=id), SynthTruth(mask=mask, minutiae=truth_ms, region=region, spec=spec)


def write_bundle(out_dir: Union[str, Path], image: GrayImage, truth: SynthTruth) -> List[Path]:
    """``image.pgm``, ``mask.pgm``, ``truth.min`` and ``spec.yaml``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [out_dir / n for n in ("image.pgm", "mask.pgm", "truth.min", "spec.yaml")]
    save_pgm(image, files[0])
    save_pgm(GrayImage.from_array(np.where(truth.mask, 255, 0).astype(np.uint8), name="mask"), files[1])
    save_minutiae(truth.minutiae, files[2])
    files[3].write_text(yaml.safe_dump(truth.spec.as_dict(), sort_keys=False))
    return files


# -- // planted point sets \\ --
def _typed(rng: np.random.Generator) -> MinutiaType:
    return MinutiaType.ending if rng.random() < 0.5 else MinutiaType.bifurcation


def random_minutiae(n: int, box: Sequence[float] = (0, 0, 200, 200), seed: int = constants.SEED, id: str = "") -> MinutiaSet:
    """``n`` typed minutiae uniform in ``box`` = (x0, y0, x1, y1), coordinates to 0.01 px."""
    if n < 0:
        raise InvalidArgument(f"n must be >= 0, got {n}")
    x0, y0, x1, y1 = (float(v) for v in box)
    rng = np.random.default_rng(seed)
    points, seen = [], set()
    while len(points) < n:
        x, y = round(float(rng.uniform(x0, x1)), 2), round(float(rng.uniform(y0, y1)), 2)
        m = Minutia(x, y, wrap_degrees(round(float(rng.uniform(0, 360)), 2)), _typed(rng))
        if (m.x, m.y) not in seen:
            seen.add((m.x, m.y))
            points.append(m)
    return MinutiaSet(id=id, points=tuple(points))


@dataclass(frozen=True)
class PlantedPair:
    C: MinutiaSet
    L: MinutiaSet
    transform: AffineParams
    pairs: Tuple[Tuple[int, int], ...]


def plant_transformed_pair(
    base: MinutiaSet,
    T0: AffineParams,
    jitter: float = 0.0,
    dropout: float = 0.0,
    clutter: int = 0,
    seed: int = constants.SEED,
    id: str = "latent",
) -> PlantedPair:
    """L = T0(base) with positional jitter, dropped points and clutter, shuffled.

    ``pairs`` lists (index in base, index in L) for every surviving point.
    """
    if jitter < 0 or not 0.0 <= dropout <= 1.0 or clutter < 0:
        raise InvalidArgument(f"jitter >= 0, dropout in [0, 1], clutter >= 0 required, got {jitter}, {dropout}, {clutter}")
    rng = np.random.default_rng(seed)
    moved = transform_set(T0, base)
    n = len(base)
    dropped = set(rng.choice(n, size=int(round(dropout * n)), replace=False).tolist()) if n else set()
    keep = [i for i in range(n) if i not in dropped]
    noise = rng.normal(0.0, jitter, size=(n, 2)) if jitter > 0 else np.zeros((n, 2))

    points = [
        Minutia(round(moved[i].x + noise[i, 0], 2), round(moved[i].y + noise[i, 1], 2),
                wrap_degrees(round(moved[i].orientation, 2)), moved[i].mtype)
        for i in keep
    ]
    sources: List[Optional[int]] = list(keep)
    if clutter:
        xy = np.array([(m.x, m.y) for m in points]) if points else np.zeros((1, 2))
        lo, hi = xy.min(axis=0) - 10, xy.max(axis=0) + 10
        for _ in range(clutter):
            x, y = (round(float(v), 2) for v in rng.uniform(lo, hi))
            points.append(Minutia(x, y, wrap_degrees(round(float(rng.uniform(0, 360)), 2)), _typed(rng)))
            sources.append(None)

    order = rng.permutation(len(points))
    L = MinutiaSet(id=id, points=tuple(points[k] for k in order))
    pairs = tuple(sorted((sources[k], j) for j, k in enumerate(order) if sources[k] is not None))
    return PlantedPair(C=base, L=L, transform=T0, pairs=pairs)


def random_transform(
    C: MinutiaSet,
    rng: np.random.Generator,
    theta_range: Sequence[float] = constants.THETA_RANGE,
    scale_range: Sequence[float] = constants.SCALE_RANGE,
    t_range: Sequence[float] = constants.T_RANGE,
    target: Point = (220.0, 220.0),
) -> AffineParams:
    """Random rotation and scale, translated so the centroid lands near ``target``."""
    theta = float(rng.uniform(*theta_range))
    scale = float(rng.uniform(*scale_range))
    cx, cy = C.xy.mean(axis=0) if len(C) else (0.0, 0.0)
    th = math.radians(theta)
    rx, ry = scale * (cx * math.cos(th) - cy * math.sin(th)), scale * (cx * math.sin(th) + cy * math.cos(th))
    tx, ty = (float(np.clip(t - r + rng.uniform(-20, 20), *t_range)) for t, r in zip(target, (rx, ry)))
    return AffineParams(round(theta, 3), round(scale, 4), round(tx, 2), round(ty, 2))


@dataclass(frozen=True)
class PlantedGallery:
    gallery: Gallery
    latents: Tuple[LatentQuery, ...]
    planted: Dict[str, PlantedPair] = field(default_factory=dict)


def make_planted_gallery(
    n_latents: int = 5,
    n_impostors: int = 5,
    points: int = 30,
    seed: int = constants.SEED,
    jitter: float = 2.0,
    dropout: float = 0.2,
    clutter: int = 5,
    box: Sequence[float] = (0, 0, 200, 200),
) -> PlantedGallery:
    """Mates ``g000..``, impostors ``i000..`` and latents ``q000..`` planted from their mates."""
    if n_latents < 1 or n_impostors < 0 or points < 1:
        raise InvalidArgument("need at least one latent and one point per set")
    seq = np.random.SeedSequence(seed)
    mate_seeds, imp_seeds, plant_seeds, t_seed = seq.spawn(4)
    entries, latents, planted = [], [], {}
    t_rng = np.random.default_rng(t_seed)
    for i, s in enumerate(mate_seeds.spawn(n_latents)):
        mate = random_minutiae(points, box, seed=s, id=f"g{i:03d}")
        entries.append((mate.id, mate))
    for i, s in enumerate(imp_seeds.spawn(n_impostors)):
        imp = random_minutiae(points, box, seed=s, id=f"i{i:03d}")
        entries.append((imp.id, imp))
    for i, s in enumerate(plant_seeds.spawn(n_latents)):
        mate = entries[i][1]
        qid = f"q{i:03d}"
        pair = plant_transformed_pair(
            mate, random_transform(mate, t_rng), jitter=jitter, dropout=dropout, clutter=clutter, seed=s, id=qid
        )
        planted[qid] = pair
        latents.append(LatentQuery(id=qid, minutiae=pair.L, mate_id=mate.id))
    log.debug(f"make_planted_gallery: {len(entries)} gallery entries, {len(latents)} latents, {points} points each")
    return PlantedGallery(gallery=Gallery(entries=tuple(entries)), latents=tuple(latents), planted=planted)


def write_planted_gallery(out_dir: Union[str, Path], pg: PlantedGallery) -> Path:
    """``gallery/<id>.min``, ``latents/<id>.min``, ``manifest.txt`` and ``truth.yaml``; returns the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "gallery").mkdir(parents=True, exist_ok=True)
    (out_dir / "latents").mkdir(parents=True, exist_ok=True)
    for gid, ms in pg.gallery.entries:
        (out_dir / "gallery" / f"{gid}.min").write_text(format_minutiae(ms))
    lines, truth = [], {}
    for q in pg.latents:
        (out_dir / "latents" / f"{q.id}.min").write_text(format_minutiae(q.minutiae))
        lines.append(f"latent {q.id} latents/{q.id}.min mate={q.mate_id}")
        pair = pg.planted.get(q.id)
        if pair:
            T = pair.transform
            truth[q.id] = {
                "mate": q.mate_id, "theta": T.theta, "scale": T.scale, "tx": T.tx, "ty": T.ty,
                "surviving_pairs": len(pair.pairs),
            }
    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    (out_dir / "truth.yaml").write_text(yaml.safe_dump(truth, sort_keys=False))
    return manifest
