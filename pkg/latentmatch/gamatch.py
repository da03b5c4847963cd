#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Genetic-algorithm alignment of a gallery minutiae set C onto a latent set L.

A chromosome is (θ, s, tx, ty).  Its fitness is the number of one-to-one
minutia pairs within the distance and orientation tolerances once C has
been rotated, scaled and translated by it.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import tablib

from . import constants, log
from .batch import BatchRequest, batch_run, chunked
from .constants import MinutiaType
from .exceptions import ConfigError, InputError, InvalidArgument
from .minutiae import Minutia, MinutiaSet, angle_diff, wrap_degrees

Pair = Tuple[int, int]
_TYPE_CODE = {MinutiaType.ending: 0, MinutiaType.bifurcation: 1, MinutiaType.unknown: 2}


@dataclass(frozen=True)
class AffineParams:
    theta: float = 0.0
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.scale, self.tx, self.ty], dtype=np.float64)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "AffineParams":
        return cls(*(float(v) for v in a))


def _range(name: str, value) -> Tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise ConfigError(f"{name} must be [min, max] with min <= max, got {[lo, hi]}")
    return lo, hi


@dataclass(frozen=True)
class GaConfig:
    population: int = constants.POPULATION
    p_crossover: float = constants.P_CROSSOVER
    p_mutation: float = constants.P_MUTATION
    g_max: int = constants.G_MAX
    stall_generations: int = constants.STALL_GENERATIONS
    delta_d: float = constants.DELTA_D
    delta_o: float = constants.DELTA_O
    seed: int = constants.SEED
    theta_range: Tuple[float, float] = constants.THETA_RANGE
    scale_range: Tuple[float, float] = constants.SCALE_RANGE
    tx_range: Tuple[float, float] = constants.T_RANGE
    ty_range: Tuple[float, float] = constants.T_RANGE
    seed_fraction: float = 0.0
    refine: bool = True
    early_stop: bool = True
    restarts: int = constants.RESTARTS
    restart_below: float = constants.RESTART_BELOW

    def __post_init__(self):
        for name in ("theta_range", "scale_range", "tx_range", "ty_range"):
            object.__setattr__(self, name, _range(name, getattr(self, name)))
        if self.population < 2:
            raise ConfigError(f"population must be >= 2, got {self.population}")
        for name in ("p_crossover", "p_mutation", "seed_fraction", "restart_below"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.g_max < 0 or self.stall_generations < 1 or self.restarts < 0:
            raise ConfigError("g_max and restarts must be >= 0 and stall_generations >= 1")
        if not (self.delta_d > 0 and self.delta_o > 0):
            raise ConfigError(f"delta_d and delta_o must be > 0, got {self.delta_d}, {self.delta_o}")
        if self.scale_range[0] <= 0:
            raise ConfigError(f"scale_range must be positive, got {list(self.scale_range)}")

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        ranges = np.array([self.theta_range, self.scale_range, self.tx_range, self.ty_range])
        return ranges[:, 0], ranges[:, 1]

    def contains(self, T: AffineParams) -> bool:
        lo, hi = self.bounds
        a = T.as_array()
        return bool(np.all(a >= lo) and np.all(a <= hi))


@dataclass(frozen=True)
class MatchResult:
    score: int
    transform: AffineParams
    pairs: Tuple[Pair, ...] = ()
    fitness_history: Tuple[int, ...] = ()
    generations: int = 0
    stop_reason: str = ""
    gallery_id: str = ""
    latent_id: str = ""
    refined: bool = False
    runs: int = 1


# -- // geometry and pairing \\ --
def _transform_xy(params: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """params (P, 4), xy (n, 2) -> (P, n, 2)."""
    th = np.radians(params[:, 0])[:, None]
    s = params[:, 1][:, None]
    x, y = xy[None, :, 0], xy[None, :, 1]
    xp = s * (x * np.cos(th) - y * np.sin(th)) + params[:, 2][:, None]
    yp = s * (x * np.sin(th) + y * np.cos(th)) + params[:, 3][:, None]
    return np.stack([xp, yp], axis=-1)


def apply_transform(T: AffineParams, m: Minutia) -> Minutia:
    th = math.radians(T.theta)
    x = T.scale * (m.x * math.cos(th) - m.y * math.sin(th)) + T.tx
    y = T.scale * (m.x * math.sin(th) + m.y * math.cos(th)) + T.ty
    return Minutia(x, y, wrap_degrees(m.orientation + T.theta), m.mtype)


def transform_set(T: AffineParams, ms: MinutiaSet) -> MinutiaSet:
    return MinutiaSet(id=ms.id, points=tuple(apply_transform(T, m) for m in ms))


def _type_codes(ms: MinutiaSet) -> np.ndarray:
    return np.array([_TYPE_CODE[t] for t in ms.types], dtype=np.int8)


def _compatible(tc: np.ndarray, tl: np.ndarray) -> np.ndarray:
    u = _TYPE_CODE[MinutiaType.unknown]
    return (tc[:, None] == tl[None, :]) | (tc[:, None] == u) | (tl[None, :] == u)


def greedy_pairs(ok: np.ndarray, ed: np.ndarray, eo: np.ndarray) -> List[Pair]:
    """One-to-one pairs among allowed candidates, by ascending distance, then orientation gap, then indices."""
    ci, lj = np.nonzero(ok)
    if not ci.size:
        return []
    order = np.lexsort((lj, ci, eo[ci, lj], ed[ci, lj]))
    used_c, used_l = set(), set()
    pairs = []
    for k in order:
        i, j = int(ci[k]), int(lj[k])
        if i not in used_c and j not in used_l:
            used_c.add(i)
            used_l.add(j)
            pairs.append((i, j))
    return sorted(pairs)


def pair_and_count(
    C_t: MinutiaSet, L: MinutiaSet, delta_d: float = constants.DELTA_D, delta_o: float = constants.DELTA_O,
    use_types: bool = True,
) -> Tuple[int, List[Pair]]:
    if not len(C_t) or not len(L):
        return 0, []
    cxy, lxy = C_t.xy, L.xy
    ed = np.hypot(cxy[:, None, 0] - lxy[None, :, 0], cxy[:, None, 1] - lxy[None, :, 1])
    eo = angle_diff(C_t.orientations[:, None], L.orientations[None, :])
    ok = (ed <= delta_d) & (eo <= delta_o)
    if use_types:
        ok &= _compatible(_type_codes(C_t), _type_codes(L))
    pairs = greedy_pairs(ok, ed, eo)
    return len(pairs), pairs


class _Problem:
    """C and L as arrays, shared read-only by every fitness evaluation."""

    def __init__(self, C: MinutiaSet, L: MinutiaSet, cfg: GaConfig):
        self.C, self.L, self.cfg = C, L, cfg
        self.cxy, self.lxy = C.xy, L.xy
        self.co, self.lo = C.orientations, L.orientations
        self.compat = _compatible(_type_codes(C), _type_codes(L))

    def evaluate(self, params: np.ndarray, with_pairs: bool = False):
        params = np.atleast_2d(params)
        if not len(self.C) or not len(self.L):
            fit = np.zeros(len(params), dtype=np.int64)
            return (fit, [[] for _ in params]) if with_pairs else fit
        txy = _transform_xy(params, self.cxy)
        ed = np.hypot(txy[:, :, None, 0] - self.lxy[None, None, :, 0], txy[:, :, None, 1] - self.lxy[None, None, :, 1])
        to = (self.co[None, :] + params[:, 0][:, None]) % 360.0
        eo = angle_diff(to[:, :, None], self.lo[None, None, :])
        ok = (ed <= self.cfg.delta_d) & (eo <= self.cfg.delta_o) & self.compat[None]
        if not with_pairs:
            # no row or column with two candidates: every candidate is a pair
            fit = ok.sum(axis=(1, 2)).astype(np.int64)
            conflicted = (ok.sum(axis=2) > 1).any(axis=1) | (ok.sum(axis=1) > 1).any(axis=1)
            for p in np.flatnonzero(conflicted):
                fit[p] = len(greedy_pairs(ok[p], ed[p], eo[p]))
            return fit
        fit = np.zeros(len(params), dtype=np.int64)
        all_pairs = []
        for p in range(len(params)):
            pairs = greedy_pairs(ok[p], ed[p], eo[p]) if ok[p].any() else []
            fit[p] = len(pairs)
            all_pairs.append(pairs)
        return fit, all_pairs

    def evaluate_population(self, pop: np.ndarray, threads: int = 1) -> np.ndarray:
        if threads <= 1:
            return self.evaluate(pop)
        parts = batch_run([BatchRequest(self.evaluate, (pop[sl],)) for sl in chunked(len(pop), threads)], threads=threads)
        return np.concatenate(parts)


def fitness(T: AffineParams, C: MinutiaSet, L: MinutiaSet, cfg: GaConfig = None) -> int:
    cfg = cfg or GaConfig()
    return int(_Problem(C, L, cfg).evaluate(T.as_array())[0])


# -- // GA \\ --
def _seeded_individuals(problem: _Problem, n: int, rng: np.random.Generator) -> np.ndarray:
    """Chromosomes from single-pair hypotheses: θ = o_l − o_c, random s, t maps c onto l."""
    ci, lj = np.nonzero(problem.compat)
    lo, hi = problem.cfg.bounds
    if not ci.size or n <= 0:
        return np.zeros((0, 4))
    pick = rng.integers(0, ci.size, size=n)
    i, j = ci[pick], lj[pick]
    theta = (problem.lo[j] - problem.co[i]) % 360.0
    s = lo[1] + rng.random(n) * (hi[1] - lo[1])
    th = np.radians(theta)
    cx, cy = problem.cxy[i, 0], problem.cxy[i, 1]
    tx = problem.lxy[j, 0] - s * (cx * np.cos(th) - cy * np.sin(th))
    ty = problem.lxy[j, 1] - s * (cx * np.sin(th) + cy * np.cos(th))
    return np.clip(np.stack([theta, s, tx, ty], axis=1), lo, hi)


def _similarity_fit(src: np.ndarray, dst: np.ndarray) -> Optional[np.ndarray]:
    """Least-squares rotation + scale + translation taking src onto dst (no reflection)."""
    if len(src) < 2:
        return None
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    var_s = (a * a).sum() / len(src)
    if var_s <= 1e-12:
        return None
    U, S, Vt = np.linalg.svd(b.T @ a / len(src))
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ np.diag([1.0, d]) @ Vt
    scale = (S * np.array([1.0, d])).sum() / var_s
    t = mu_d - scale * R @ mu_s
    theta = math.degrees(math.atan2(R[1, 0], R[0, 0])) % 360.0
    return np.array([theta, scale, t[0], t[1]])


def _refine(problem: _Problem, best: np.ndarray, best_fit: int, pairs: List[Pair], rounds: int = 3):
    lo, hi = problem.cfg.bounds
    current, current_pairs, improved = best, pairs, False
    for _ in range(rounds):
        if len(current_pairs) < 2:
            break
        ci = [i for i, _ in current_pairs]
        lj = [j for _, j in current_pairs]
        fitted = _similarity_fit(problem.cxy[ci], problem.lxy[lj])
        if fitted is None:
            break
        cand = np.clip(fitted, lo, hi)
        fit, cand_pairs = problem.evaluate(cand, with_pairs=True)
        if int(fit[0]) < best_fit:
            break
        current, current_pairs, best_fit, improved = cand, cand_pairs[0], int(fit[0]), True
    return current, best_fit, current_pairs, improved


def _evolve(problem: _Problem, run: int, threads: int):
    """One GA run from a fresh population; returns (best, best_fit, history, generations, reason)."""
    cfg = problem.cfg
    lo, hi = cfg.bounds
    P = cfg.population
    ceiling = min(len(problem.C), len(problem.L))

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(run, 0)))
    pop = lo + rng.random((P, 4)) * (hi - lo)
    n_seeded = int(round(cfg.seed_fraction * P))
    if n_seeded:
        seeded = _seeded_individuals(problem, n_seeded, rng)
        pop[:len(seeded)] = seeded
    fit = problem.evaluate_population(pop, threads)
    k = int(np.argmax(fit))
    best, best_fit = pop[k].copy(), int(fit[k])
    history = [best_fit]
    stall, generation, reason = 0, 0, "g_max"

    for generation in range(1, cfg.g_max + 1):
        if cfg.early_stop and best_fit >= ceiling:
            reason, generation = "perfect", generation - 1
            break
        if stall >= cfg.stall_generations:
            reason, generation = "stall", generation - 1
            break
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(run, generation)))
        weights = fit + 1.0
        parents = pop[rng.choice(P, size=P, p=weights / weights.sum())]

        children = parents.copy()
        for a in range(0, P - 1, 2):
            if rng.random() < cfg.p_crossover:
                lo_cut, hi_cut = sorted(rng.choice([1, 2, 3], size=2, replace=False))
                children[a, lo_cut:hi_cut] = parents[a + 1, lo_cut:hi_cut]
                children[a + 1, lo_cut:hi_cut] = parents[a, lo_cut:hi_cut]

        mutate = rng.random((P, 4)) < cfg.p_mutation
        fresh = lo + rng.random((P, 4)) * (hi - lo)
        children[mutate] = fresh[mutate]
        children[0] = best

        pop = children
        fit = problem.evaluate_population(pop, threads)
        k = int(np.argmax(fit))
        if fit[k] > best_fit:
            best, best_fit, stall = pop[k].copy(), int(fit[k]), 0
        else:
            stall += 1
        history.append(best_fit)
    else:
        if cfg.early_stop and best_fit >= ceiling:
            reason = "perfect"
    return best, best_fit, history, generation, reason


def run_ga(C: MinutiaSet, L: MinutiaSet, cfg: GaConfig = None, threads: int = 1) -> MatchResult:
    """Roulette selection on fitness+1, two-point crossover, uniform mutation, single elite.

    A run that stops below ``restart_below * min(|C|, |L|)`` is followed by another run from a
    fresh uniform population, at most ``restarts`` times.  The best run wins, earliest on ties.
    The fitness history is the running best over all generations of all runs.
    """
    cfg = cfg or GaConfig()
    if not len(C) or not len(L):
        raise InvalidArgument(f"cannot match empty minutiae sets (|C|={len(C)}, |L|={len(L)})")
    problem = _Problem(C, L, cfg)
    target = cfg.restart_below * min(len(C), len(L))

    best, best_fit, history, generations, reason, runs = None, -1, [], 0, "g_max", 0
    for run in range(cfg.restarts + 1):
        b, b_fit, h, g, reason = _evolve(problem, run, threads)
        runs += 1
        generations += g
        if b_fit > best_fit:
            best, best_fit = b, b_fit
        history += h
        if best_fit >= target or reason == "perfect":
            break
    history = list(np.maximum.accumulate(history))

    fit, pairs = problem.evaluate(best, with_pairs=True)
    pairs = pairs[0]
    refined = False
    if cfg.refine:
        best, best_fit, pairs, refined = _refine(problem, best, best_fit, pairs)

    T = AffineParams.from_array(best)
    log.debug(
        f"run_ga {C.id or 'C'} -> {L.id or 'L'}: score {len(pairs)} after {generations} generations in {runs} run(s)"
        f" ({reason}){', refined' if refined else ''}"
    )
    return MatchResult(
        score=len(pairs), transform=T, pairs=tuple(pairs), fitness_history=tuple(int(f) for f in history),
        generations=generations, stop_reason=reason, gallery_id=C.id, latent_id=L.id, refined=refined,
        runs=runs,
    )


# -- // serialization \\ --
def format_match_result(result: MatchResult) -> str:
    T = result.transform
    lines = [f"score {result.score}", f"transform {T.theta!r} {T.scale!r} {T.tx!r} {T.ty!r}"]
    lines += [f"{i} {j}" for i, j in result.pairs]
    return "\n".join(lines) + "\n"


def parse_match_result(text: str) -> MatchResult:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        if lines[0][0] != "score" or lines[1][0] != "transform" or len(lines[1]) != 5:
            raise ValueError
        score = int(lines[0][1])
        T = AffineParams.from_array([float(v) for v in lines[1][1:]])
        pairs = tuple((int(a), int(b)) for a, b in lines[2:])
    except (IndexError, ValueError):
        raise InputError("malformed match result, expected 'score N', 'transform θ s tx ty', then 'ci lj' lines")
    if score != len(pairs):
        raise InputError(f"match result score {score} does not equal its {len(pairs)} pairs")
    return MatchResult(score=score, transform=T, pairs=pairs)


def fitness_history_csv(result: MatchResult) -> str:
    data = tablib.Dataset(headers=["generation", "best_fitness"])
    for g, f in enumerate(result.fitness_history):
        data.append([g, f])
    return data.export("csv")
