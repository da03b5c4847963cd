#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Collection of functions used to turn latentmatch results into rows for display.
"""
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

# Detect if called from pypi installed package or via cloned github repo (development)
try:
    from latentmatch import utils
except (ImportError, ModuleNotFoundError) as e:
    pkg_dir = Path(__file__).absolute().parent
    if pkg_dir.name == "latentmatch":
        sys.path.insert(0, str(pkg_dir.parent))
        from latentmatch import utils
    else:
        print(pkg_dir.parts)
        raise e

from latentmatch.atomid import AtomAnalysis
from latentmatch.constants import CONFIG_SECTIONS
from latentmatch.evaluate import EvalSummary, SegEvalResult
from latentmatch.gamatch import MatchResult
from latentmatch.identify import TrialReport
from latentmatch.minutiae import MinutiaSet
from latentmatch.segmentation import RoiPolygon


def _f(value: Any, digits: int = 4) -> Any:
    return utils.fmt_float(value, digits)


def atom_rows(analyses: Sequence[AtomAnalysis]) -> List[Dict[str, Any]]:
    return [
        {
            "index": a.atom_index,
            "xcorr": _f(a.xcorr),
            "period": _f(a.period, 2) if a.period else None,
            "orientation": _f(a.orientation),
            "ridge-valley": a.is_ridge_valley,
        }
        for a in analyses
    ]


def roi_rows(roi: RoiPolygon) -> List[Dict[str, Any]]:
    return [{"vertex": i, "x": _f(x, 2), "y": _f(y, 2)} for i, (x, y) in enumerate(roi.vertices)]


def minutiae_rows(ms: MinutiaSet) -> List[Dict[str, Any]]:
    return [
        {"#": i, "x": _f(m.x, 2), "y": _f(m.y, 2), "orientation": _f(m.orientation, 2), "type": m.mtype.value}
        for i, m in enumerate(ms)
    ]


def match_rows(result: MatchResult) -> List[Dict[str, Any]]:
    T = result.transform
    return [
        {
            "gallery": result.gallery_id,
            "latent": result.latent_id,
            "score": result.score,
            "theta": _f(T.theta, 3),
            "scale": _f(T.scale, 4),
            "tx": _f(T.tx, 2),
            "ty": _f(T.ty, 2),
            "generations": result.generations,
            "runs": result.runs,
            "stop": result.stop_reason,
            "refined": result.refined,
        }
    ]


def trial_rows(report: TrialReport) -> List[Dict[str, Any]]:
    return [
        {
            "trial": c.trial,
            "latent": c.latent_id,
            "mate": c.mate_id,
            "category": c.category,
            "rank": c.rank,
            "R": c.R,
            "pr %": _f(c.penetration, 2),
            "mate score": c.mate_score,
            "top": c.top_id,
        }
        for c in report.cells
    ]


def cmc_rows(report: TrialReport) -> List[Dict[str, Any]]:
    rows = [{"pr %": pr, "all": _f(rate)} for pr, rate in report.cmc]
    for cat, v in report.categories.items():
        for row, (_, rate) in zip(rows, v["cmc"]):
            row[cat] = _f(rate)
    return rows


def seg_eval_rows(results: Sequence[SegEvalResult], summary: EvalSummary = None) -> List[Dict[str, Any]]:
    rows = [
        {
            "id": r.id, "gmpr": _f(r.gmpr), "fmar": _f(r.fmar), "auc": _f(r.auc),
            "|MS1|": r.n1, "|MS2|": r.n2, "|MS3|": r.n3, "MS1∩MS2": r.n12, "MS1∩MS3": r.n13,
        }
        for r in results
    ]
    if summary is not None and len(results) > 1:
        rows.append(
            {"id": "mean", "gmpr": _f(summary.gmpr), "fmar": _f(summary.fmar), "auc": _f(summary.auc),
             **{k: None for k in ("|MS1|", "|MS2|", "|MS3|", "MS1∩MS2", "MS1∩MS3")}}
        )
    return rows


def config_rows(effective: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Flatten the effective-config echo to section/key/value rows."""
    rows = []
    for section, values in effective.items():
        if not isinstance(values, dict):
            rows.append({"section": "", "key": section, "value": values, "about": ""})
            continue
        for k, v in values.items():
            rows.append({"section": section, "key": k, "value": v, "about": CONFIG_SECTIONS.get(section, "")})
    return rows
