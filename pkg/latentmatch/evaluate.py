#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Segmentation quality through minutiae: GMPR, FMAR and their two-point AUC.

MS₁ is the ground truth, MS₂ the whole-image extraction and MS₃ the
extraction restricted to the ROI.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import tablib

from . import constants, log, utils
from .batch import BatchRequest, batch_run
from .constants import EvalMode
from .exceptions import ConfigError, InvalidArgument, ManifestError
from .gamatch import pair_and_count
from .imagecore import GrayImage
from .minutiae import ExtractorConfig, MinutiaSet, extract_minutiae, load_minutiae, mask_by_roi
from .segmentation import RoiPolygon


@dataclass(frozen=True)
class EvalConfig:
    delta_d: float = constants.DELTA_D
    delta_o: float = constants.DELTA_O
    mode: EvalMode = EvalMode.exclude

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", EvalMode(self.mode))
        except ValueError:
            raise ConfigError(f"mode must be exclude or zero, got {self.mode!r}")
        if not (self.delta_d > 0 and self.delta_o > 0):
            raise ConfigError(f"evaluation tolerances must be > 0, got {self.delta_d}, {self.delta_o}")


@dataclass(frozen=True)
class MinutiaeEvalInput:
    ms1: MinutiaSet
    ms2: MinutiaSet
    ms3: MinutiaSet
    delta_d: float = constants.DELTA_D
    delta_o: float = constants.DELTA_O
    id: str = ""

    def __post_init__(self):
        if not (self.delta_d > 0 and self.delta_o > 0):
            raise InvalidArgument(f"evaluation tolerances must be > 0, got {self.delta_d}, {self.delta_o}")


@dataclass(frozen=True)
class SegEvalResult:
    id: str
    gmpr: Optional[float]
    fmar: Optional[float]
    auc: Optional[float]
    n1: int = 0
    n2: int = 0
    n3: int = 0
    n12: int = 0
    n13: int = 0
    clamped: Tuple[str, ...] = ()

    def as_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id, "gmpr": self.gmpr, "fmar": self.fmar, "auc": self.auc,
            "gmpr_defined": self.gmpr is not None, "fmar_defined": self.fmar is not None,
            "n1": self.n1, "n2": self.n2, "n3": self.n3, "n12": self.n12, "n13": self.n13,
        }


@dataclass(frozen=True)
class EvalSummary:
    count: int
    gmpr: Optional[float]
    fmar: Optional[float]
    auc: Optional[float]
    undefined: Dict[str, int] = field(default_factory=dict)
    mode: EvalMode = EvalMode.exclude

    def as_dict(self) -> Dict[str, Any]:
        return {
            "images": self.count, "mode": self.mode.value,
            "gmpr": self.gmpr, "fmar": self.fmar, "auc": self.auc, "undefined": dict(self.undefined),
        }


def set_intersection(A: MinutiaSet, B: MinutiaSet, delta_d: float = constants.DELTA_D, delta_o: float = constants.DELTA_O) -> int:
    """Size of a one-to-one correspondence between A and B (types ignored).

    Greedy pairing breaks exact distance ties by index, so both directions are
    paired and the larger count kept.
    """
    forward, _ = pair_and_count(A, B, delta_d, delta_o, use_types=False)
    backward, _ = pair_and_count(B, A, delta_d, delta_o, use_types=False)
    return max(forward, backward)


def auc_two_point(gmpr: Optional[float], fmar: Optional[float]) -> Optional[float]:
    """Area under the two-point ROC through (0, 0), (FMAR, GMPR) and (1, 1)."""
    if gmpr is None or fmar is None:
        return None
    for name, v in (("gmpr", gmpr), ("fmar", fmar)):
        if not 0.0 <= v <= 1.0:
            raise InvalidArgument(f"{name} {v} outside [0, 1]")
    return (gmpr + 1.0 - fmar) / 2.0


def _ratio(name: str, num: int, den: int, clamped: List[str], id: str) -> Optional[float]:
    if den == 0:
        return None
    value = num / den
    if value > 1.0:
        log.warning(f"{id or 'image'}: {name} {num}/{den} > 1, clamped to 1")
        clamped.append(name)
        value = 1.0
    return value


def gmpr_fmar(inp: MinutiaeEvalInput) -> SegEvalResult:
    n12 = set_intersection(inp.ms1, inp.ms2, inp.delta_d, inp.delta_o)
    n13 = set_intersection(inp.ms1, inp.ms3, inp.delta_d, inp.delta_o)
    clamped: List[str] = []
    gmpr = _ratio("gmpr", n13, n12, clamped, inp.id)
    fmar = _ratio("fmar", len(inp.ms3) - n13, len(inp.ms2) - n12, clamped, inp.id)
    return SegEvalResult(
        id=inp.id, gmpr=gmpr, fmar=fmar, auc=auc_two_point(gmpr, fmar),
        n1=len(inp.ms1), n2=len(inp.ms2), n3=len(inp.ms3), n12=n12, n13=n13, clamped=tuple(clamped),
    )


def batch_summary(results: Sequence[SegEvalResult], mode: EvalMode = EvalMode.exclude) -> EvalSummary:
    """Per-metric means.  ``exclude`` skips undefined values, ``zero`` counts them as 0."""
    mode = EvalMode(mode)
    means, undefined = {}, {}
    for metric in ("gmpr", "fmar", "auc"):
        values = [getattr(r, metric) for r in results]
        undefined[metric] = sum(v is None for v in values)
        if mode is EvalMode.zero:
            values = [0.0 if v is None else v for v in values]
        else:
            values = [v for v in values if v is not None]
        means[metric] = float(np.mean(values)) if values else None
    return EvalSummary(count=len(results), undefined=undefined, mode=mode, **means)


def _roi_only(img: GrayImage, roi: RoiPolygon) -> GrayImage:
    """Image with everything outside the ROI flattened to the ROI's mean intensity."""
    inside = roi.to_mask(img.width, img.height)
    px = img.as_float()
    fill = px[inside].mean() if inside.any() else px.mean()
    return GrayImage.from_array(np.rint(np.where(inside, px, fill)).astype(np.uint8), name=img.name)


def evaluate_image(
    img: GrayImage,
    ms1: MinutiaSet,
    roi: RoiPolygon,
    extractor: ExtractorConfig = None,
    cfg: EvalConfig = None,
) -> SegEvalResult:
    """Extract MS₂ from the whole image and MS₃ from the ROI only, then score against MS₁."""
    cfg = cfg or EvalConfig()
    ms2 = extract_minutiae(img, None, extractor)
    if roi.is_empty:
        ms3 = MinutiaSet(id=img.name)
    else:
        ms3 = mask_by_roi(extract_minutiae(_roi_only(img, roi), None, extractor), roi)
    inp = MinutiaeEvalInput(ms1=ms1, ms2=ms2, ms3=ms3, delta_d=cfg.delta_d, delta_o=cfg.delta_o, id=img.name or ms1.id)
    return gmpr_fmar(inp)


def load_eval_manifest(path: Union[str, Path]) -> List[Tuple[str, Path, Path, Path]]:
    """Lines ``<id> <ms1> <ms2> <ms3>``, paths relative to the manifest."""
    path = Path(path)
    rows, seen = [], set()
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ManifestError(f"{path}:{line_no}: expected '<id> <ms1> <ms2> <ms3>', got {line!r}")
        if parts[0] in seen:
            raise ManifestError(f"{path}:{line_no}: duplicate id {parts[0]!r}")
        seen.add(parts[0])
        rows.append((parts[0], *(path.parent / p for p in parts[1:])))
    if not rows:
        raise ManifestError(f"{path}: no entries")
    return rows


def _evaluate_row(id: str, files: Sequence[Path], cfg: EvalConfig) -> SegEvalResult:
    ms1, ms2, ms3 = (load_minutiae(f) for f in files)
    return gmpr_fmar(MinutiaeEvalInput(ms1, ms2, ms3, cfg.delta_d, cfg.delta_o, id=id))


def evaluate_manifest(path: Union[str, Path], cfg: EvalConfig = None, threads: int = 1) -> List[SegEvalResult]:
    cfg = cfg or EvalConfig()
    rows = load_eval_manifest(path)
    return batch_run([BatchRequest(_evaluate_row, (row[0], row[1:], cfg)) for row in rows], threads=threads)


def _cell(v: Any) -> Any:
    if v is None:
        return ""
    return round(v, 6) if isinstance(v, float) else v


def results_csv(results: Sequence[SegEvalResult], summary: EvalSummary, config_echo: Dict[str, Any] = None) -> str:
    data = tablib.Dataset(headers=list(SegEvalResult("", None, None, None).as_dict().keys()))
    for r in results:
        data.append([_cell(v) for v in r.as_dict().values()])
    data.append(["mean", _cell(summary.gmpr), _cell(summary.fmar), _cell(summary.auc)] + [""] * (data.width - 4))
    body = data.export("csv").replace("\r\n", "\n")
    header = utils.yaml_header({"config": config_echo}) if config_echo else ""
    return header + body
