import pytest
import yaml

from latentmatch.config import Config, parse_set_option
from latentmatch.constants import TiePolicy
from latentmatch.exceptions import ConfigError


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv("LATENTMATCH_CONFIG", raising=False)
    monkeypatch.delenv("LATENTMATCH_DEBUG", raising=False)


def _config(tmp_path, data=None, name="config.yaml"):
    f = tmp_path / name
    if data is not None:
        f.write_text(data if isinstance(data, str) else yaml.safe_dump(data))
    return Config(file=f)


def test_defaults(tmp_path):
    rc = _config(tmp_path).run_config()
    assert rc.seed == 0 and rc.threads == 1
    assert rc.patch.patch_size == 32 and rc.patch.stride == 8
    assert rc.train.n_atoms == 100 and rc.train.sparsity == 2
    assert rc.atoms.th_xcorr == 0.6
    assert rc.ga.population == 400 and rc.ga.delta_d == 15
    assert rc.plan.subset_size == 50 and rc.plan.checkpoints[0] == 1.0
    assert rc.morph.min_area == 2 * 32 * 32


def test_global_seed_reaches_every_seeded_section(tmp_path):
    rc = _config(tmp_path, {"seed": 7}).run_config()
    assert rc.seed == rc.train.seed == rc.ga.seed == rc.plan.seed == 7
    rc = _config(tmp_path, {"seed": 7, "ga": {"seed": 3}}).run_config(seed=11)
    assert rc.seed == rc.train.seed == 11
    assert rc.ga.seed == 3


def test_overrides_beat_the_file(tmp_path):
    cfg = _config(tmp_path, {"imagecore": {"patch_size": 16}, "identify": {"tie_policy": "optimistic"}})
    rc = cfg.run_config()
    assert rc.patch.patch_size == 16
    assert rc.morph.min_area == 2 * 16 * 16
    assert rc.plan.tie_policy is TiePolicy.optimistic
    rc = cfg.run_config(parse_set_option(["imagecore.patch_size=24", "segmentation.min_area=10"]), threads=4)
    assert rc.patch.patch_size == 24
    assert rc.morph.min_area == 10
    assert rc.threads == 4


def test_lists_become_tuples(tmp_path):
    rc = _config(tmp_path, {"identify": {"checkpoints": [10, 50, 100]}}).run_config()
    assert rc.plan.checkpoints == (10.0, 50.0, 100.0)


def test_parse_set_option():
    assert parse_set_option(["ga.population=50", "ga.refine=false", "imagecore.stride=4"]) == {
        "ga": {"population": 50, "refine": False},
        "imagecore": {"stride": 4},
    }
    assert parse_set_option(None) == {}
    for bad in ("ga.population", "population=5"):
        with pytest.raises(ConfigError):
            parse_set_option([bad])


@pytest.mark.parametrize(
    "data",
    [
        {"colour": "red"},
        {"ga": {"populace": 5}},
        {"ga": {"population": 1}},
        {"seed": -1},
        {"threads": 0},
        {"identify": {"tie_policy": "random"}},
    ],
    ids=["section", "key", "value", "seed", "threads", "enum"],
)
def test_bad_values(tmp_path, data):
    with pytest.raises(ConfigError):
        _config(tmp_path, data).run_config()


def test_unknown_override_section(tmp_path):
    with pytest.raises(ConfigError):
        _config(tmp_path).run_config({"nowhere": {"x": 1}})


def test_json_file_and_load(tmp_path):
    cfg = _config(tmp_path, '{"seed": 5, "debug": true}', name="config.json")
    assert cfg.debug and cfg.seed == 5 and bool(cfg)
    other = tmp_path / "other.yaml"
    other.write_text("seed: 9\n")
    cfg.load(other)
    assert cfg.file == other and cfg.run_config().seed == 9
    with pytest.raises(ConfigError):
        cfg.load(tmp_path / "missing.yaml")


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        _config(tmp_path, "seed: [1\n", name="broken.yaml")
    with pytest.raises(ConfigError):
        _config(tmp_path, "seed = 1\n", name="config.toml")


def test_env_variable_selects_file(tmp_path, monkeypatch):
    f = tmp_path / "env.yaml"
    f.write_text("threads: 3\n")
    monkeypatch.setenv("LATENTMATCH_CONFIG", str(f))
    assert Config().run_config().threads == 3


def test_as_yaml_is_plain(tmp_path):
    rc = _config(tmp_path, {"seed": 2}).run_config()
    doc = yaml.safe_load(rc.as_yaml())
    assert doc["seed"] == 2
    assert doc["identify"]["tie_policy"] == "id"
    assert doc["ga"]["theta_range"] == [0.0, 359.0]
    assert set(doc) == {"seed", "threads", "imagecore", "dictlearn", "atomid", "segmentation", "extractor", "ga",
                        "identify", "evaluate"}


def test_echo_leaves_out_threads(tmp_path):
    cfg = _config(tmp_path, {"seed": 2})
    one, four = cfg.run_config(threads=1), cfg.run_config(threads=4)
    assert one.as_yaml(echo=True) == four.as_yaml(echo=True)
    assert "threads" not in one.as_dict(echo=True)
    assert one.as_dict() != four.as_dict()
