#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Latent search against gallery subsets, penetration rate and CMC over repeated trials."""

import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import tablib
import yaml

from . import constants, log, utils
from .batch import BatchRequest, batch_run
from .constants import Category, Scenario, TiePolicy
from .exceptions import ConfigError, InvalidArgument, ManifestError, NotFoundError
from .gamatch import GaConfig, run_ga
from .imagecore import load_image
from .minutiae import ExtractorConfig, MinutiaSet, extract_minutiae, load_minutiae, mask_by_roi

IMAGE_SUFFIXES = (".pgm", ".png")


@dataclass(frozen=True)
class TrialPlan:
    subset_size: int = constants.SUBSET_SIZE
    trials: int = constants.TRIALS
    seed: int = constants.SEED
    checkpoints: Tuple[float, ...] = constants.CMC_CHECKPOINTS
    tie_policy: TiePolicy = TiePolicy.id
    scenario: Scenario = Scenario.roi

    def __post_init__(self):
        try:
            object.__setattr__(self, "tie_policy", TiePolicy(self.tie_policy))
            object.__setattr__(self, "scenario", Scenario(self.scenario))
        except ValueError as e:
            raise ConfigError(f"identify: {e}")
        if self.subset_size < 2:
            raise ConfigError(f"subset_size must be >= 2, got {self.subset_size}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        pts = tuple(float(p) for p in self.checkpoints)
        if not pts or any(not 0 < p <= 100 for p in pts) or list(pts) != sorted(pts):
            raise ConfigError(f"checkpoints must be ascending values in (0, 100], got {list(pts)}")
        object.__setattr__(self, "checkpoints", pts)


@dataclass(frozen=True)
class Gallery:
    entries: Tuple[Tuple[str, MinutiaSet], ...]
    source: Optional[Path] = None

    def __post_init__(self):
        entries = tuple((str(i), ms) for i, ms in self.entries)
        ids = [i for i, _ in entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise InvalidArgument(f"duplicate gallery id(s): {', '.join(dupes)}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index", {i: ms for i, ms in entries})

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, id: str) -> bool:
        return id in self._index

    @property
    def ids(self) -> List[str]:
        return [i for i, _ in self.entries]

    def get(self, id: str) -> MinutiaSet:
        try:
            return self._index[id]
        except KeyError:
            raise NotFoundError(f"gallery has no entry {id!r}")


@dataclass(frozen=True)
class LatentQuery:
    id: str
    minutiae: MinutiaSet
    mate_id: str
    category: Optional[Category] = None
    source: Optional[Path] = None


@dataclass(frozen=True)
class CandidateList:
    """(id, score) sorted by descending score, ties by id."""
    query_id: str
    ranked: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(sorted(self.ranked, key=lambda c: (-c[1], c[0]))))

    def __len__(self) -> int:
        return len(self.ranked)

    @property
    def ids(self) -> List[str]:
        return [i for i, _ in self.ranked]

    def score_of(self, id: str) -> int:
        for i, s in self.ranked:
            if i == id:
                return s
        raise NotFoundError(f"{id!r} is not in the candidate list for {self.query_id!r}")

    def rank_of(self, id: str, tie_policy: TiePolicy = TiePolicy.id) -> int:
        """1-based rank.  ``optimistic``/``pessimistic`` place the mate first/last among equal scores."""
        score = self.score_of(id)
        tie_policy = TiePolicy(tie_policy)
        if tie_policy is TiePolicy.optimistic:
            return 1 + sum(s > score for _, s in self.ranked)
        if tie_policy is TiePolicy.pessimistic:
            return sum(s >= score for _, s in self.ranked)
        return self.ids.index(id) + 1


def entry_seed(seed: int, id: str) -> int:
    """Per-gallery-entry GA seed, independent of subset composition and thread count."""
    return int(np.random.SeedSequence([seed, zlib.crc32(id.encode("utf-8"))]).generate_state(1)[0])


def match_score(latent: MinutiaSet, id: str, entry: MinutiaSet, cfg: GaConfig) -> int:
    if not len(latent) or not len(entry):
        return 0
    return run_ga(entry, latent, replace(cfg, seed=entry_seed(cfg.seed, id))).score


def search(
    latent: MinutiaSet,
    subset: Sequence[Tuple[str, MinutiaSet]],
    cfg: GaConfig = None,
    threads: int = 1,
) -> CandidateList:
    cfg = cfg or GaConfig()
    subset = list(subset)
    if not subset:
        raise InvalidArgument("search needs a non-empty gallery subset")
    scores = batch_run([BatchRequest(match_score, (latent, i, ms, cfg)) for i, ms in subset], threads=threads)
    return CandidateList(query_id=latent.id, ranked=tuple(zip([i for i, _ in subset], scores)))


def penetration_rate(cl: CandidateList, mate_id: str, tie_policy: TiePolicy = TiePolicy.id) -> float:
    return cl.rank_of(mate_id, tie_policy) / len(cl) * 100.0


def _cutoff(pr: float, R: int) -> int:
    return math.ceil(round(pr * R / 100.0, 9))


def cmc(ranks: Sequence[Tuple[int, int]], checkpoints: Sequence[float] = constants.CMC_CHECKPOINTS) -> List[Tuple[float, float]]:
    """Identification rate at each penetration checkpoint; ``ranks`` holds (mate rank, list length)."""
    ranks = list(ranks)
    if not ranks:
        raise InvalidArgument("cmc needs at least one query")
    return [
        (float(pr), sum(rank <= _cutoff(pr, R) for rank, R in ranks) / len(ranks))
        for pr in checkpoints
    ]


@dataclass(frozen=True)
class TrialCell:
    trial: int
    latent_id: str
    mate_id: str
    category: Optional[str]
    rank: int
    R: int
    penetration: float
    mate_score: int
    top_id: str
    top_score: int


@dataclass(frozen=True)
class TrialReport:
    cells: Tuple[TrialCell, ...]
    checkpoints: Tuple[float, ...]
    mean_penetration: float
    cmc: Tuple[Tuple[float, float], ...]
    categories: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def rank_rate(self, k: int = 1) -> float:
        return rank_rate(self, k)


def rank_rate(report: TrialReport, k: int = 1) -> float:
    """Fraction of cells whose mate is within the top ``k``."""
    if not report.cells:
        return 0.0
    return sum(c.rank <= k for c in report.cells) / len(report.cells)


def _aggregate(cells: Sequence[TrialCell], checkpoints: Sequence[float]) -> Tuple[float, Tuple[Tuple[float, float], ...]]:
    mean = float(np.mean([c.penetration for c in cells]))
    return mean, tuple(cmc([(c.rank, c.R) for c in cells], checkpoints))


def _subsets(latents: Sequence[LatentQuery], gallery: Gallery, plan: TrialPlan) -> Dict[Tuple[int, int], List[str]]:
    R = plan.subset_size
    out = {}
    for t in range(plan.trials):
        for li, q in enumerate(latents):
            rng = np.random.default_rng(np.random.SeedSequence(plan.seed, spawn_key=(t, li)))
            others = [i for i in gallery.ids if i != q.mate_id]
            pick = rng.choice(len(others), size=R - 1, replace=False)
            out[(t, li)] = sorted([others[k] for k in pick] + [q.mate_id])
    return out


def run_trials(
    latents: Sequence[LatentQuery],
    gallery: Gallery,
    plan: TrialPlan = None,
    cfg: GaConfig = None,
    threads: int = 1,
) -> TrialReport:
    """Repeat the subset search ``plan.trials`` times per latent and aggregate ranks."""
    plan, cfg = plan or TrialPlan(), cfg or GaConfig()
    latents = list(latents)
    if not latents:
        raise InvalidArgument("no latent queries to run")
    missing = [q.mate_id for q in latents if q.mate_id not in gallery]
    if missing:
        raise ConfigError(f"mate(s) not in gallery: {', '.join(sorted(set(missing)))}")
    if plan.subset_size > len(gallery):
        raise ConfigError(f"subset_size {plan.subset_size} exceeds gallery size {len(gallery)}")

    subsets = _subsets(latents, gallery, plan)
    # each (latent, entry) score is fixed by the entry's seed, so it is computed once for all trials
    needed = sorted({(li, gid) for (_, li), ids in subsets.items() for gid in ids})
    log.debug(f"run_trials: {len(latents)} latents x {plan.trials} trials, {len(needed)} distinct matches")
    scores = batch_run(
        [BatchRequest(match_score, (latents[li].minutiae, gid, gallery.get(gid), cfg)) for li, gid in needed],
        threads=threads,
    )
    score_of = dict(zip(needed, scores))

    cells = []
    for (t, li), ids in sorted(subsets.items()):
        q = latents[li]
        cl = CandidateList(query_id=q.id, ranked=tuple((gid, score_of[(li, gid)]) for gid in ids))
        rank = cl.rank_of(q.mate_id, plan.tie_policy)
        top_id, top_score = cl.ranked[0]
        cells.append(TrialCell(
            trial=t, latent_id=q.id, mate_id=q.mate_id, category=q.category.value if q.category else None,
            rank=rank, R=len(cl), penetration=rank / len(cl) * 100.0, mate_score=cl.score_of(q.mate_id),
            top_id=top_id, top_score=top_score,
        ))

    mean, curve = _aggregate(cells, plan.checkpoints)
    categories = {}
    for cat in sorted({c.category for c in cells if c.category}):
        sub = [c for c in cells if c.category == cat]
        cat_mean, cat_curve = _aggregate(sub, plan.checkpoints)
        categories[cat] = {"cells": len(sub), "mean_penetration": cat_mean, "cmc": cat_curve}
    log.debug(f"run_trials: mean penetration {mean:.3f}%, rank-1 {sum(c.rank == 1 for c in cells)}/{len(cells)}")
    return TrialReport(
        cells=tuple(cells), checkpoints=plan.checkpoints, mean_penetration=mean, cmc=curve, categories=categories
    )


# -- // inputs \\ --
def _minutiae_for(path: Path, id: str, extractor: ExtractorConfig, scenario: Scenario, seg_cfg=None) -> MinutiaSet:
    if path.suffix == ".min":
        return load_minutiae(path, id=id)
    img = load_image(path)
    if scenario is Scenario.whole:
        return extract_minutiae(img, None, extractor).renamed(id)
    from .segmentation import segment

    roi = segment(img, seg_cfg)
    return mask_by_roi(extract_minutiae(img, None, extractor), roi).renamed(id)


def load_gallery(directory: Union[str, Path], extractor: ExtractorConfig = None, threads: int = 1) -> Gallery:
    """``<id>.min`` sidecars win over ``<id>.pgm|png`` images, which are extracted whole."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidArgument(f"gallery {directory} is not a directory")
    files: Dict[str, Path] = {}
    for f in sorted(directory.iterdir()):
        if f.suffix in IMAGE_SUFFIXES and f.stem not in files:
            files[f.stem] = f
    for f in sorted(directory.glob("*.min")):
        files[f.stem] = f
    if not files:
        raise InvalidArgument(f"gallery {directory} has no .min, .pgm or .png entries")
    ids = sorted(files)
    sets = batch_run(
        [BatchRequest(_minutiae_for, (files[i], i, extractor, Scenario.whole)) for i in ids], threads=threads
    )
    log.debug(f"load_gallery {directory}: {len(ids)} entries ({sum(files[i].suffix == '.min' for i in ids)} sidecars)")
    return Gallery(entries=tuple(zip(ids, sets)), source=directory)


def parse_manifest_line(line: str, where: str = "") -> Tuple[str, str, str, Optional[Category]]:
    parts = line.split()
    if len(parts) < 4 or parts[0] != "latent":
        raise ManifestError(f"{where}expected 'latent <id> <path> mate=<id> [category=...]', got {line!r}")
    opts = {}
    for p in parts[3:]:
        if "=" not in p:
            raise ManifestError(f"{where}bad option {p!r}")
        k, v = p.split("=", 1)
        opts[k] = v
    unknown = set(opts) - {"mate", "category"}
    if unknown or "mate" not in opts:
        raise ManifestError(f"{where}need mate=<id>, unknown option(s): {', '.join(sorted(unknown)) or 'none'}")
    category = None
    if "category" in opts:
        try:
            category = Category(opts["category"].lower())
        except ValueError:
            raise ManifestError(f"{where}category must be good, bad or ugly, got {opts['category']!r}")
    return parts[1], parts[2], opts["mate"], category


def load_manifest(
    path: Union[str, Path],
    extractor: ExtractorConfig = None,
    scenario: Scenario = Scenario.roi,
    seg_cfg=None,
    threads: int = 1,
) -> List[LatentQuery]:
    """Manifest lines ``latent <id> <path> mate=<id> [category=good|bad|ugly]``."""
    path = Path(path)
    rows = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        id, file, mate, category = parse_manifest_line(line, where=f"{path}:{line_no}: ")
        if any(r[0] == id for r in rows):
            raise ManifestError(f"{path}:{line_no}: duplicate latent id {id!r}")
        src = path.parent / file
        if not src.is_file():
            raise ManifestError(f"{path}:{line_no}: {src} not found")
        rows.append((id, src, mate, category))
    if not rows:
        raise ManifestError(f"{path}: no latent entries")
    scenario = Scenario(scenario)
    sets = batch_run(
        [BatchRequest(_minutiae_for, (src, id, extractor, scenario, seg_cfg)) for id, src, _, _ in rows],
        threads=threads,
    )
    return [
        LatentQuery(id=id, minutiae=ms, mate_id=mate, category=category, source=src)
        for (id, src, mate, category), ms in zip(rows, sets)
    ]


# -- // reports \\ --
def report_rows(report: TrialReport) -> List[Dict[str, Any]]:
    return [
        {
            "trial": c.trial, "latent": c.latent_id, "mate": c.mate_id, "category": c.category or "",
            "rank": c.rank, "R": c.R, "penetration": round(c.penetration, 6), "mate_score": c.mate_score,
            "top": c.top_id, "top_score": c.top_score,
        }
        for c in report.cells
    ]


def report_csv(report: TrialReport, config_echo: Dict[str, Any] = None) -> str:
    rows = report_rows(report)
    data = tablib.Dataset(headers=list(rows[0].keys()) if rows else [])
    for r in rows:
        data.append(list(r.values()))
    header = utils.yaml_header({"config": config_echo}) if config_echo else ""
    return header + data.export("csv").replace("\r\n", "\n")


def summary_dict(report: TrialReport) -> Dict[str, Any]:
    return {
        "cells": len(report.cells),
        "mean_penetration": round(report.mean_penetration, 6),
        "rank1": round(rank_rate(report, 1), 6),
        "cmc": {_pr_key(pr): round(rate, 6) for pr, rate in report.cmc},
        "categories": {
            cat: {
                "cells": v["cells"],
                "mean_penetration": round(v["mean_penetration"], 6),
                "cmc": {_pr_key(pr): round(rate, 6) for pr, rate in v["cmc"]},
            }
            for cat, v in report.categories.items()
        },
    }


def _pr_key(pr: float):
    return int(pr) if float(pr).is_integer() else pr


def summary_yaml(report: TrialReport, config_echo: Dict[str, Any] = None) -> str:
    out = {"summary": summary_dict(report)}
    if config_echo:
        out["config"] = config_echo
    return yaml.safe_dump(out, sort_keys=False)
