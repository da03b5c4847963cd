import json

import pytest
import yaml
from typer.testing import CliRunner

from latentmatch import __version__, config
from latentmatch.cli import app
from latentmatch.clicommon import CLICommon
from latentmatch.dictlearn import load_dictionary
from latentmatch.gamatch import parse_match_result
from latentmatch.imagecore import save_pgm
from latentmatch.minutiae import MinutiaSet, load_minutiae, save_minutiae
from latentmatch.segmentation import load_roi
from latentmatch.synthgen import SynthSpec, generate, make_planted_gallery, random_minutiae, write_planted_gallery

runner = CliRunner()

SMALL_DICT = ["-w", "16", "--stride", "8", "--atoms", "12", "--sparsity", "1", "--epochs", "1"]


@pytest.fixture(autouse=True)
def clean_config(monkeypatch):
    monkeypatch.delenv("LATENTMATCH_CONFIG", raising=False)
    monkeypatch.setattr(config, "data", {})
    monkeypatch.setattr(config, "file", None)


@pytest.fixture(scope="module")
def latent_image(tmp_path_factory):
    img, truth = generate(SynthSpec(width=128, height=128, region="left-half", background=0, blur=0), id="latent")
    f = tmp_path_factory.mktemp("img") / "latent.pgm"
    save_pgm(img, f)
    return f


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert f"latentmatch {__version__}" in result.stdout
    assert "LMDICT1" in result.stdout


def test_show_config_with_overrides():
    result = runner.invoke(app, ["--seed", "4", "--set", "ga.population=33", "show", "config", "--json"])
    assert result.exit_code == 0
    assert '"population": 33' in result.stdout
    assert '"seed": 4' in result.stdout


def test_show_config_from_file(tmp_path):
    f = tmp_path / "lm.yaml"
    f.write_text("identify:\n  subset_size: 7\n")
    result = runner.invoke(app, ["--config", str(f), "show", "config", "--json"])
    assert result.exit_code == 0
    assert '"subset_size": 7' in result.stdout


@pytest.mark.parametrize(
    "args", [["--set", "ga.population"], ["--set", "ga.populace=3"], ["--config", "nope.yaml"]],
    ids=["syntax", "key", "missing-file"],
)
def test_bad_configuration_exits_1(args):
    result = runner.invoke(app, args + ["show", "config"])
    assert result.exit_code == 1


def test_missing_input_exits_2(tmp_path):
    result = runner.invoke(app, ["match", str(tmp_path / "a.min"), str(tmp_path / "b.min")])
    assert result.exit_code == 2
    assert "not found" in result.output


def test_unparseable_input_exits_2(tmp_path):
    (tmp_path / "a.min").write_text("1 2 3\n")
    result = runner.invoke(app, ["show", "minutiae", str(tmp_path / "a.min")])
    assert result.exit_code == 2


def test_synth(tmp_path):
    spec = tmp_path / "s1.yaml"
    spec.write_text(yaml.safe_dump({"width": 64, "height": 64, "minutiae": [[20, 32, "E"]], "lines": 2}))
    result = runner.invoke(app, ["--seed", "5", "synth", str(spec), str(tmp_path / "out")])
    assert result.exit_code == 0
    for name in ("image.pgm", "mask.pgm", "truth.min", "spec.yaml"):
        assert (tmp_path / "out" / name).is_file()
    assert yaml.safe_load((tmp_path / "out" / "spec.yaml").read_text())["seed"] == 5
    assert len(load_minutiae(tmp_path / "out" / "truth.min")) == 1


def test_match_clone(tmp_path):
    ms = random_minutiae(15, seed=21, id="query")
    save_minutiae(ms, tmp_path / "latent.min")
    save_minutiae(ms, tmp_path / "gallery.min")
    result = runner.invoke(
        app,
        [
            "match", str(tmp_path / "latent.min"), str(tmp_path / "gallery.min"),
            "--out", str(tmp_path / "result.txt"), "--history", str(tmp_path / "history.csv"),
            "--population", "150", "--g-max", "50", "--seed-fraction", "0.3",
        ],
    )
    assert result.exit_code == 0
    match = parse_match_result((tmp_path / "result.txt").read_text())
    assert match.score == 15
    history = (tmp_path / "history.csv").read_text().splitlines()
    assert history[0].startswith("# ")
    assert "generation,best_fitness" in history


def test_synth_gallery_and_identify(tmp_path):
    out = tmp_path / "planted"
    result = runner.invoke(
        app, ["--seed", "3", "synth-gallery", str(out), "--latents", "2", "--impostors", "3", "--points", "15"]
    )
    assert result.exit_code == 0
    assert (out / "manifest.txt").is_file() and (out / "truth.yaml").is_file()
    assert len(list((out / "gallery").glob("*.min"))) == 5

    result = runner.invoke(
        app,
        [
            "identify", str(out / "manifest.txt"), str(out / "gallery"), str(tmp_path / "report.csv"),
            "--summary", str(tmp_path / "summary.yaml"), "-R", "3", "--trials", "1", "--cells", "--json",
        ],
    )
    assert result.exit_code == 0
    rows = [ln for ln in (tmp_path / "report.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("trial,latent,mate")
    assert len(rows) == 3
    assert [row.split(",")[4] for row in rows[1:]] == ["1", "1"]
    doc = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert doc["summary"]["cells"] == 2
    assert doc["config"]["identify"]["subset_size"] == 3


def test_eval_seg_single_and_manifest(tmp_path):
    gt = random_minutiae(5, box=(0, 0, 400, 400), seed=1, id="gt")
    extra = random_minutiae(5, box=(1000, 1000, 1400, 1400), seed=2)
    for name, ms in (("ms1", gt), ("ms2", MinutiaSet(id="ms2", points=gt.points + extra.points)), ("ms3", gt)):
        save_minutiae(ms, tmp_path / f"{name}.min")
    files = [str(tmp_path / f"{n}.min") for n in ("ms1", "ms2", "ms3")]

    result = runner.invoke(app, ["eval-seg", *files, "--out", str(tmp_path / "one.csv")])
    assert result.exit_code == 0
    body = [ln for ln in (tmp_path / "one.csv").read_text().splitlines() if not ln.startswith("#")]
    assert body[-1].startswith("mean,1.0,0.0,1.0")

    (tmp_path / "eval.txt").write_text("a ms1.min ms2.min ms3.min\nb ms1.min ms2.min ms2.min\n")
    result = runner.invoke(app, ["eval-seg", "--manifest", str(tmp_path / "eval.txt"), "--json"])
    assert result.exit_code == 0


@pytest.mark.parametrize("args", [[], ["a.min", "b.min"]], ids=["nothing", "two-files"])
def test_eval_seg_usage(args):
    assert runner.invoke(app, ["eval-seg", *args]).exit_code == 1


def test_segment_with_dump_and_extraction(tmp_path, latent_image):
    dump = tmp_path / "dump"
    result = runner.invoke(
        app,
        ["segment", str(latent_image), str(tmp_path / "latent.roi"), *SMALL_DICT, "--dump", str(dump),
         "--extract-out", str(tmp_path / "roi.min")],
    )
    assert result.exit_code == 0
    roi = load_roi(tmp_path / "latent.roi")
    assert not roi.is_empty
    for name in ("dictionary.lmd", "atoms.tsv", "votes.pgm", "mask.pgm", "config.yaml"):
        assert (dump / name).is_file()
    assert yaml.safe_load((dump / "config.yaml").read_text())["imagecore"]["patch_size"] == 16
    assert all(roi.contains(m.x, m.y) for m in load_minutiae(tmp_path / "roi.min"))

    result = runner.invoke(app, ["show", "roi", str(tmp_path / "latent.roi"), "--json"])
    assert result.exit_code == 0
    assert json.loads(result.stdout)


def test_segment_min_needs_extract_out(tmp_path, latent_image):
    save_minutiae(random_minutiae(3), tmp_path / "a.min")
    result = runner.invoke(app, ["segment", str(latent_image), str(tmp_path / "x.roi"), "--min", str(tmp_path / "a.min")])
    assert result.exit_code == 1


def test_learn_dict_and_show_dict(tmp_path, latent_image):
    out = tmp_path / "latent.lmd"
    result = runner.invoke(app, ["learn-dict", str(latent_image), str(out), *SMALL_DICT, "--report", str(tmp_path / "a.tsv")])
    assert result.exit_code == 0
    D = load_dictionary(out)
    assert D.atom_count == 12 and D.atom_dim == 256 and D.is_labeled
    assert len(D.error_history) == 2

    result = runner.invoke(app, ["show", "dict", str(out), "--csv"])
    assert result.exit_code == 0
    assert "ridge-valley" in result.stdout or "other" in result.stdout


@pytest.fixture(scope="module")
def inputs(tmp_path_factory, latent_image):
    root = tmp_path_factory.mktemp("inputs")
    ms = random_minutiae(15, seed=21, id="query")
    save_minutiae(ms, root / "latent.min")
    save_minutiae(random_minutiae(15, seed=22, id="other"), root / "gallery.min")
    write_planted_gallery(root / "planted", make_planted_gallery(n_latents=2, n_impostors=3, points=15, seed=5))
    gt = random_minutiae(5, box=(0, 0, 400, 400), seed=1, id="gt")
    save_minutiae(gt, root / "ms1.min")
    save_minutiae(random_minutiae(8, box=(0, 0, 400, 400), seed=2, id="ms2"), root / "ms2.min")
    save_minutiae(gt, root / "ms3.min")
    (root / "eval.txt").write_text("a ms1.min ms2.min ms3.min\nb ms1.min ms3.min ms3.min\n")
    return {"image": latent_image, "root": root}


def _segment(src, out):
    args = ["segment", str(src["image"]), str(out / "latent.roi"), *SMALL_DICT, "--dump", str(out / "dump")]
    return args, ["latent.roi", "dump/dictionary.lmd", "dump/atoms.tsv", "dump/votes.pgm", "dump/mask.pgm", "dump/config.yaml"]


def _learn_dict(src, out):
    return ["learn-dict", str(src["image"]), str(out / "d.lmd"), *SMALL_DICT, "--report", str(out / "atoms.tsv")], [
        "d.lmd", "atoms.tsv"
    ]


def _match(src, out):
    root = src["root"]
    args = ["match", str(root / "latent.min"), str(root / "gallery.min"), "--population", "60", "--g-max", "20",
            "--out", str(out / "match.txt"), "--history", str(out / "history.csv")]
    return args, ["match.txt", "history.csv"]


def _identify(src, out):
    planted = src["root"] / "planted"
    args = ["--set", "ga.population=60", "--set", "ga.g_max=20", "identify", str(planted / "manifest.txt"),
            str(planted / "gallery"), str(out / "report.csv"), "--summary", str(out / "summary.yaml"), "-R", "3",
            "--trials", "2"]
    return args, ["report.csv", "summary.yaml"]


def _eval_seg(src, out):
    return ["eval-seg", "--manifest", str(src["root"] / "eval.txt"), "--out", str(out / "eval.csv")], ["eval.csv"]


def _synth_gallery(src, out):
    args = ["synth-gallery", str(out / "g"), "--latents", "2", "--impostors", "2", "--points", "10"]
    return args, ["g/manifest.txt", "g/truth.yaml", "g/latents/q000.min", "g/gallery/i001.min"]


@pytest.mark.parametrize(
    "build", [_segment, _learn_dict, _match, _identify, _eval_seg, _synth_gallery],
    ids=["segment", "learn-dict", "match", "identify", "eval-seg", "synth-gallery"],
)
def test_outputs_do_not_depend_on_thread_count(tmp_path, inputs, build):
    outputs = []
    for threads in ("1", "4"):
        out = tmp_path / f"threads{threads}"
        out.mkdir()
        args, files = build(inputs, out)
        result = runner.invoke(app, ["--seed", "3", "--threads", threads, *args])
        assert result.exit_code == 0, result.output
        outputs.append([(out / f).read_bytes() for f in files])
    assert outputs[0] == outputs[1]


def test_display_results_writes_rows_in_given_order(tmp_path):
    rows = [{"rank": 2, "id": "b"}, {"rank": 1, "id": "a"}]
    out = tmp_path / "rows.json"
    CLICommon().display_results(rows, tablefmt="json", pager=False, outfile=out)
    assert json.loads(out.read_text()) == rows


def test_display_results_ignores_none(tmp_path):
    out = tmp_path / "none.json"
    CLICommon().display_results(None, tablefmt="json", outfile=out)
    assert not out.exists()
