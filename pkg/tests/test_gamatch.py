import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from latentmatch.constants import MinutiaType
from latentmatch.exceptions import ConfigError, InputError, InvalidArgument
from latentmatch.gamatch import (
    AffineParams,
    GaConfig,
    MatchResult,
    apply_transform,
    fitness,
    fitness_history_csv,
    format_match_result,
    pair_and_count,
    parse_match_result,
    run_ga,
    transform_set,
)
from latentmatch.minutiae import Minutia, MinutiaSet, angle_diff
from latentmatch.synthgen import plant_transformed_pair, random_minutiae, random_transform

FAST = dict(population=120, g_max=40, stall_generations=15)


def test_identity_transform():
    m = Minutia(3, 4, 10, MinutiaType.ending)
    assert apply_transform(AffineParams(), m) == m


def test_quarter_turn():
    m = apply_transform(AffineParams(theta=90), Minutia(1, 0, 0, "E"))
    assert (m.x, m.y) == pytest.approx((0, 1), abs=1e-9)
    assert m.orientation == 90.0 and m.mtype is MinutiaType.ending


def test_scale_and_translate():
    m = apply_transform(AffineParams(theta=0, scale=2, tx=5, ty=-3), Minutia(1, 1, 350, "B"))
    assert (m.x, m.y) == pytest.approx((7, -1))
    assert m.orientation == 350.0 and m.mtype is MinutiaType.bifurcation


def test_pairing_of_identical_sets():
    ms = random_minutiae(12, seed=4)
    count, pairs = pair_and_count(ms, ms)
    assert count == 12
    assert pairs == [(i, i) for i in range(12)]


def test_pairing_far_sets():
    a = random_minutiae(5, box=(0, 0, 50, 50), seed=1)
    b = random_minutiae(5, box=(500, 500, 550, 550), seed=2)
    assert pair_and_count(a, b) == (0, [])


def test_pairing_respects_types_and_circular_orientation():
    c = MinutiaSet(id="c", points=(Minutia(0, 0, 359, "E"), Minutia(50, 0, 0, "E")))
    l = MinutiaSet(id="l", points=(Minutia(1, 0, 1, "E"), Minutia(50, 0, 0, "B")))
    count, pairs = pair_and_count(c, l)
    assert (count, pairs) == (1, [(0, 0)])
    unknown = MinutiaSet(id="u", points=(Minutia(50, 0, 0, "U"),))
    assert pair_and_count(c, unknown)[0] == 1


def test_greedy_pairing_against_maximum_matching():
    rng = np.random.default_rng(0)
    agree, trials = 0, 300
    for t in range(trials):
        n, m = rng.integers(1, 7, size=2)
        c = MinutiaSet(id="c", points=tuple(Minutia(*rng.uniform(0, 60, 2), 0, "E") for _ in range(n)))
        l = MinutiaSet(id="l", points=tuple(Minutia(*rng.uniform(0, 60, 2), 0, "E") for _ in range(m)))
        greedy, pairs = pair_and_count(c, l)
        ok = np.hypot(c.xy[:, None, 0] - l.xy[None, :, 0], c.xy[:, None, 1] - l.xy[None, :, 1]) <= 15
        rows, cols = linear_sum_assignment(ok.astype(int), maximize=True)
        best = int(ok[rows, cols].sum())
        assert greedy <= best
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == greedy
        agree += greedy == best
    assert agree / trials >= 0.85


def test_fitness_at_planted_transform():
    C = random_minutiae(20, seed=3)
    T0 = AffineParams(theta=37, scale=1.1, tx=120, ty=40)
    L = transform_set(T0, C)
    assert fitness(T0, C, L) == 20
    flipped = AffineParams(theta=T0.theta + 180, scale=T0.scale, tx=T0.tx, ty=T0.ty)
    assert fitness(flipped, C, L) < 20
    assert fitness(T0, MinutiaSet(id="e"), L) == 0


def test_run_ga_rejects_empty_sets():
    with pytest.raises(InvalidArgument):
        run_ga(MinutiaSet(id="e"), random_minutiae(3))


@pytest.mark.parametrize("seed", [1, 2])
def test_run_ga_recovers_planted_transform(seed):
    rng = np.random.default_rng(seed)
    C = random_minutiae(30, seed=seed, id="gallery")
    T0 = AffineParams(
        theta=float(rng.uniform(0, 359)), scale=float(rng.uniform(0.85, 1.15)),
        tx=float(rng.uniform(-100, 100)), ty=float(rng.uniform(-100, 100)),
    )
    L = transform_set(T0, C).renamed("latent")
    cfg = GaConfig(seed=seed)
    result = run_ga(C, L, cfg)

    assert result.score >= 27
    T = result.transform
    assert float(angle_diff(T.theta, T0.theta)) <= 5
    assert abs(T.scale - T0.scale) <= 0.05
    assert abs(T.tx - T0.tx) <= 10 and abs(T.ty - T0.ty) <= 10
    assert (result.gallery_id, result.latent_id) == ("gallery", "latent")


def _recovered(result, pair) -> bool:
    T, T0 = result.transform, pair.transform
    return (
        result.score >= 0.9 * len(pair.pairs)
        and float(angle_diff(T.theta, T0.theta)) <= 5
        and abs(T.scale - T0.scale) <= 0.05
        and abs(T.tx - T0.tx) <= 10 and abs(T.ty - T0.ty) <= 10
    )


def test_default_ga_recovers_noisy_planted_transforms():
    recovered = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        C = random_minutiae(30, seed=seed, id="gallery")
        T0 = random_transform(C, rng)
        pair = plant_transformed_pair(C, T0, jitter=3, dropout=0.2, clutter=10, seed=seed)
        recovered += _recovered(run_ga(C, pair.L, GaConfig(seed=seed)), pair)
    assert recovered >= 9


def test_restarts_keep_the_best_run():
    C = random_minutiae(30, box=(0, 0, 500, 500), seed=31)
    L = random_minutiae(30, box=(0, 0, 500, 500), seed=32)
    single = run_ga(C, L, GaConfig(seed=4, restarts=0, **FAST))
    several = run_ga(C, L, GaConfig(seed=4, restarts=2, **FAST))
    assert single.runs == 1 and several.runs == 3
    assert max(several.fitness_history) >= max(single.fitness_history)
    assert len(several.fitness_history) == several.generations + several.runs
    history = several.fitness_history
    assert all(b >= a for a, b in zip(history, history[1:]))

    assert run_ga(C, L, GaConfig(seed=4, restarts=3, restart_below=0.0, **FAST)).runs == 1


def test_population_fitness_matches_greedy_pairing():
    C = random_minutiae(25, box=(0, 0, 120, 120), seed=41)
    L = random_minutiae(25, box=(0, 0, 120, 120), seed=42)
    cfg = GaConfig(seed=0, delta_d=30, delta_o=60)
    lo, hi = cfg.bounds
    pop = lo + np.random.default_rng(0).random((40, 4)) * (hi - lo)
    pop[:, 2:] = np.random.default_rng(1).uniform(-40, 40, size=(40, 2))
    counts = [fitness(AffineParams.from_array(p), C, L, cfg) for p in pop]
    scored = [pair_and_count(transform_set(AffineParams.from_array(p), C), L, 30, 60)[0] for p in pop]
    assert counts == scored
    assert any(counts)


def test_impostor_scores_stay_low():
    scores = []
    for seed in range(3):
        C = random_minutiae(30, box=(0, 0, 500, 500), seed=100 + seed)
        L = random_minutiae(30, box=(0, 0, 500, 500), seed=200 + seed)
        scores.append(run_ga(C, L, GaConfig(seed=seed, restarts=0, **FAST)).score)
    assert statistics.median(scores) <= 6


def test_run_ga_invariants():
    C = random_minutiae(15, seed=8)
    pair = plant_transformed_pair(C, AffineParams(20, 1.0, 30, 30), jitter=1.5, dropout=0.2, clutter=3, seed=8)
    cfg = GaConfig(seed=5, seed_fraction=0.2, **FAST)
    result = run_ga(C, pair.L, cfg)

    history = result.fitness_history
    assert all(b >= a for a, b in zip(history, history[1:]))
    assert result.score == len(result.pairs) <= min(len(C), len(pair.L))
    assert len({i for i, _ in result.pairs}) == len({j for _, j in result.pairs}) == result.score
    assert cfg.contains(result.transform)

    moved = transform_set(result.transform, C)
    for i, j in result.pairs:
        a, b = moved[i], pair.L[j]
        assert np.hypot(a.x - b.x, a.y - b.y) <= cfg.delta_d + 1e-9
        assert float(angle_diff(a.orientation, b.orientation)) <= cfg.delta_o + 1e-9
        assert a.mtype == b.mtype

    assert run_ga(C, pair.L, cfg) == result


def test_run_ga_thread_count_does_not_change_result():
    C = random_minutiae(10, seed=9)
    L = random_minutiae(10, seed=10)
    cfg = GaConfig(seed=2, **FAST)
    assert run_ga(C, L, cfg, threads=1) == run_ga(C, L, cfg, threads=3)


def test_run_ga_stop_reasons():
    C = random_minutiae(8, seed=11)
    assert run_ga(C, C, GaConfig(population=4, g_max=0)).stop_reason in ("g_max", "perfect")
    r = run_ga(C, random_minutiae(8, box=(0, 0, 30, 30), seed=12), GaConfig(population=10, g_max=50, stall_generations=3, restarts=0))
    assert r.stop_reason in ("stall", "perfect")
    assert r.generations < 50 or r.stop_reason == "perfect"


def test_ga_config_validation():
    with pytest.raises(ConfigError):
        GaConfig(population=1)
    with pytest.raises(ConfigError):
        GaConfig(p_crossover=1.5)
    with pytest.raises(ConfigError):
        GaConfig(delta_d=0)
    with pytest.raises(ConfigError):
        GaConfig(scale_range=(1.2, 0.8))


def test_match_result_text_round_trip():
    result = MatchResult(score=2, transform=AffineParams(12.5, 0.9, -3.25, 40.0), pairs=((0, 3), (2, 1)))
    again = parse_match_result(format_match_result(result))
    assert again.transform == result.transform and again.pairs == result.pairs and again.score == 2


def test_match_result_score_must_equal_pairs():
    with pytest.raises(InputError):
        parse_match_result("score 3\ntransform 0 1 0 0\n0 0\n")
    with pytest.raises(InputError):
        parse_match_result("transform 0 1 0 0\n")


def test_fitness_history_csv():
    text = fitness_history_csv(MatchResult(score=0, transform=AffineParams(), fitness_history=(1, 2, 2)))
    lines = text.strip().splitlines()
    assert lines[0].strip() == "generation,best_fitness"
    assert len(lines) == 4


_coord = st.integers(-300, 300)
_minutia = st.builds(Minutia, _coord, _coord, st.integers(0, 359), st.sampled_from(["E", "B", "U"]))


@given(_minutia, st.integers(0, 359), st.integers(0, 359))
def test_rotations_compose(m, a, b):
    twice = apply_transform(AffineParams(theta=b), apply_transform(AffineParams(theta=a), m))
    once = apply_transform(AffineParams(theta=(a + b) % 360), m)
    assert (twice.x, twice.y) == pytest.approx((once.x, once.y), abs=1e-6)
    assert float(angle_diff(twice.orientation, once.orientation)) <= 1e-6
    assert twice.mtype is once.mtype


@settings(max_examples=50)
@given(st.lists(_minutia, max_size=12, unique_by=lambda m: (m.x, m.y)),
       st.lists(_minutia, max_size=12, unique_by=lambda m: (m.x, m.y)))
def test_pairs_are_one_to_one_and_within_tolerance(c_points, l_points):
    C = MinutiaSet(id="c", points=tuple(c_points))
    L = MinutiaSet(id="l", points=tuple(l_points))
    count, pairs = pair_and_count(C, L)
    assert count == len(pairs) <= min(len(C), len(L))
    assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == count
    for i, j in pairs:
        a, b = C[i], L[j]
        assert np.hypot(a.x - b.x, a.y - b.y) <= 15
        assert float(angle_diff(a.orientation, b.orientation)) <= 20
        assert MinutiaType.unknown in (a.mtype, b.mtype) or a.mtype == b.mtype
