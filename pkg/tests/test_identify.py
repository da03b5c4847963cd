import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from latentmatch.constants import Category, TiePolicy
from latentmatch.exceptions import ConfigError, InvalidArgument, ManifestError, NotFoundError
from latentmatch.gamatch import GaConfig
from latentmatch.identify import (
    CandidateList,
    Gallery,
    LatentQuery,
    TrialPlan,
    cmc,
    entry_seed,
    load_gallery,
    load_manifest,
    parse_manifest_line,
    penetration_rate,
    rank_rate,
    report_csv,
    run_trials,
    search,
    summary_dict,
    summary_yaml,
)
from latentmatch.minutiae import MinutiaSet, save_minutiae
from latentmatch.synthgen import make_planted_gallery, random_minutiae, write_planted_gallery

GA = GaConfig()


def _list(n, mate_at):
    ranked = [(f"e{i:02d}", 100 - i) for i in range(n)]
    return CandidateList(query_id="q", ranked=tuple(ranked)), ranked[mate_at - 1][0]


@pytest.mark.parametrize("rank,expected", [(5, 10.0), (1, 2.0), (50, 100.0)])
def test_penetration_rate(rank, expected):
    cl, mate = _list(50, rank)
    assert penetration_rate(cl, mate) == pytest.approx(expected)


def test_penetration_rate_needs_the_mate():
    cl, _ = _list(5, 1)
    with pytest.raises(NotFoundError):
        penetration_rate(cl, "nobody")


def test_candidate_list_orders_ties_by_id():
    cl = CandidateList(query_id="q", ranked=(("b", 3), ("c", 5), ("a", 3)))
    assert cl.ids == ["c", "a", "b"]
    assert cl.rank_of("b") == 3
    assert cl.rank_of("b", TiePolicy.optimistic) == 2
    assert cl.rank_of("a", TiePolicy.pessimistic) == 3


def test_cmc_step_function():
    curve = dict(cmc([(5, 50)], (1, 5, 10, 15, 100)))
    assert curve == {1.0: 0.0, 5.0: 0.0, 10.0: 1.0, 15.0: 1.0, 100.0: 1.0}


def test_cmc_needs_a_query():
    with pytest.raises(InvalidArgument):
        cmc([])


def test_entry_seed():
    assert entry_seed(0, "g001") == entry_seed(0, "g001")
    assert entry_seed(0, "g001") != entry_seed(0, "g002")
    assert entry_seed(0, "g001") != entry_seed(1, "g001")


def test_gallery_invariants():
    ms = random_minutiae(3)
    with pytest.raises(InvalidArgument):
        Gallery(entries=(("a", ms), ("a", ms)))
    g = Gallery(entries=(("a", ms),))
    assert "a" in g and len(g) == 1 and g.get("a") is ms
    with pytest.raises(NotFoundError):
        g.get("b")


def test_trial_plan_validation():
    with pytest.raises(ConfigError):
        TrialPlan(subset_size=1)
    with pytest.raises(ConfigError):
        TrialPlan(trials=0)
    with pytest.raises(ConfigError):
        TrialPlan(checkpoints=(10, 5))
    with pytest.raises(ConfigError):
        TrialPlan(tie_policy="random")


def test_search_ranks_a_clone_first():
    latent = random_minutiae(15, seed=21, id="latent")
    subset = [("clone", latent.renamed("clone"))] + [
        (f"imp{i}", random_minutiae(15, seed=30 + i, id=f"imp{i}")) for i in range(3)
    ]
    cl = search(latent, subset, GA)
    assert cl.ranked[0] == ("clone", 15)
    assert len(cl) == 4


def test_search_single_entry_and_empty_subset():
    latent = random_minutiae(5, seed=1)
    cl = search(latent, [("only", random_minutiae(5, seed=2))], GA)
    assert cl.rank_of("only") == 1
    with pytest.raises(InvalidArgument):
        search(latent, [], GA)


def test_search_with_empty_latent_scores_zero():
    cl = search(MinutiaSet(id="blank"), [("a", random_minutiae(5))], GA)
    assert cl.ranked == (("a", 0),)


def test_two_entry_trial():
    latent = random_minutiae(12, seed=5, id="q")
    gallery = Gallery(entries=(("mate", latent.renamed("mate")), ("imp", random_minutiae(12, seed=6))))
    q = LatentQuery(id="q", minutiae=latent, mate_id="mate")
    report = run_trials([q], gallery, TrialPlan(subset_size=2, trials=1), GA)
    assert report.mean_penetration == pytest.approx(50.0)
    assert report.cells[0].rank == 1 and report.cells[0].R == 2
    assert dict(report.cmc)[100.0] == 1.0


def test_run_trials_errors():
    ms = random_minutiae(4)
    gallery = Gallery(entries=(("a", ms), ("b", ms)))
    with pytest.raises(ConfigError):
        run_trials([LatentQuery("q", ms, mate_id="zz")], gallery, TrialPlan(subset_size=2, trials=1), GA)
    with pytest.raises(ConfigError):
        run_trials([LatentQuery("q", ms, mate_id="a")], gallery, TrialPlan(subset_size=3, trials=1), GA)
    with pytest.raises(InvalidArgument):
        run_trials([], gallery, TrialPlan(subset_size=2, trials=1), GA)


@pytest.fixture(scope="module")
def planted():
    return make_planted_gallery(n_latents=2, n_impostors=6, points=20, seed=3)


@pytest.fixture(scope="module")
def planted_report(planted):
    plan = TrialPlan(subset_size=5, trials=2, seed=1, checkpoints=(20, 40, 60, 80, 100))
    return run_trials(planted.latents, planted.gallery, plan, GA)


def test_planted_mates_rank_first(planted_report):
    assert len(planted_report.cells) == 4
    assert rank_rate(planted_report, 1) >= 0.75


def test_report_invariants(planted, planted_report):
    rates = [rate for _, rate in planted_report.cmc]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1.0
    for c in planted_report.cells:
        assert c.R == 5 and 1 <= c.rank <= 5
        assert c.penetration == pytest.approx(c.rank / 5 * 100)
    mean = sum(c.penetration for c in planted_report.cells) / len(planted_report.cells)
    assert planted_report.mean_penetration == pytest.approx(mean)


def test_trials_are_deterministic_and_thread_independent(planted, planted_report):
    plan = TrialPlan(subset_size=5, trials=2, seed=1, checkpoints=(20, 40, 60, 80, 100))
    assert run_trials(planted.latents, planted.gallery, plan, GA, threads=3) == planted_report


def test_default_search_ranks_planted_mates_first():
    planted = make_planted_gallery(n_latents=5, n_impostors=9, points=30, seed=8)
    report = run_trials(planted.latents, planted.gallery, TrialPlan(subset_size=10, trials=10, seed=8), GaConfig())
    assert len(report.cells) == 50
    assert rank_rate(report, 1) >= 0.9
    rates = [rate for _, rate in report.cmc]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1.0


def test_categories():
    latent = random_minutiae(10, seed=7, id="q1")
    other = random_minutiae(10, seed=8, id="q2")
    gallery = Gallery(entries=(("m1", latent), ("m2", other), ("x", random_minutiae(10, seed=9))))
    queries = [
        LatentQuery("q1", latent, "m1", Category.good),
        LatentQuery("q2", other, "m2", Category.ugly),
    ]
    report = run_trials(queries, gallery, TrialPlan(subset_size=2, trials=2, checkpoints=(50, 100)), GA)
    assert sorted(report.categories) == ["good", "ugly"]
    assert report.categories["good"]["cells"] == 2
    summary = summary_dict(report)
    assert set(summary["categories"]) == {"good", "ugly"}
    assert set(summary["cmc"]) == {50, 100}


def test_report_csv_and_summary(planted_report):
    text = report_csv(planted_report, config_echo={"identify": {"subset_size": 5}})
    lines = text.splitlines()
    assert lines[0] == "# config:"
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "trial,latent,mate,category,rank,R,penetration,mate_score,top,top_score"
    assert len(body) == 1 + len(planted_report.cells)

    doc = yaml.safe_load(summary_yaml(planted_report, {"seed": 0}))
    assert doc["summary"]["cells"] == 4
    assert doc["summary"]["cmc"][100] == 1.0
    assert doc["config"] == {"seed": 0}


def test_manifest_line():
    assert parse_manifest_line("latent q1 a.min mate=g1 category=Bad") == ("q1", "a.min", "g1", Category.bad)
    assert parse_manifest_line("latent q1 a.min mate=g1")[3] is None


@pytest.mark.parametrize(
    "line",
    ["query q1 a.min mate=g1", "latent q1 a.min", "latent q1 a.min g1", "latent q1 a.min mate=g1 category=fine",
     "latent q1 a.min mate=g1 colour=red"],
    ids=["keyword", "short", "option", "category", "unknown"],
)
def test_manifest_line_errors(line):
    with pytest.raises(ManifestError):
        parse_manifest_line(line)


def test_manifest_file_errors(tmp_path):
    (tmp_path / "m.txt").write_text("latent q1 missing.min mate=g1\n")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "m.txt")
    save_minutiae(random_minutiae(3), tmp_path / "a.min")
    (tmp_path / "m.txt").write_text("latent q1 a.min mate=g1\nlatent q1 a.min mate=g2\n")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "m.txt")
    (tmp_path / "m.txt").write_text("# nothing\n")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "m.txt")


def test_planted_gallery_files_round_trip(tmp_path, planted):
    manifest = write_planted_gallery(tmp_path, planted)
    latents = load_manifest(manifest)
    gallery = load_gallery(tmp_path / "gallery")
    assert [q.id for q in latents] == ["q000", "q001"]
    assert [q.mate_id for q in latents] == ["g000", "g001"]
    assert gallery.ids == planted.gallery.ids
    assert gallery.get("g001") == planted.gallery.get("g001")
    assert latents[0].minutiae == planted.latents[0].minutiae


def test_load_gallery_errors(tmp_path):
    with pytest.raises(InvalidArgument):
        load_gallery(tmp_path / "nope")
    with pytest.raises(InvalidArgument):
        load_gallery(tmp_path)


_rank_and_size = st.integers(1, 60).flatmap(lambda R: st.tuples(st.integers(1, R), st.just(R)))


@given(st.lists(_rank_and_size, min_size=1, max_size=20))
def test_cmc_is_monotone_and_complete(ranks):
    rates = [rate for _, rate in cmc(ranks)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1.0
    assert all(0.0 <= r <= 1.0 for r in rates)
