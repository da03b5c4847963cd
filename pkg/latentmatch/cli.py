#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sys
from pathlib import Path
from typing import List, Optional

import click
import typer

# Detect if called from pypi installed package or via cloned github repo (development)
try:
    from latentmatch import __version__, cleaner, cli, clishow, constants, log, utils
except (ImportError, ModuleNotFoundError) as e:
    pkg_dir = Path(__file__).absolute().parent
    if pkg_dir.name == "latentmatch":
        sys.path.insert(0, str(pkg_dir.parent))
        from latentmatch import __version__, cleaner, cli, clishow, constants, log, utils
    else:
        print(pkg_dir.parts)
        raise e

from latentmatch.config import parse_set_option
from latentmatch.constants import CodingMode, EvalMode, Scenario, TiePolicy

CONTEXT_SETTINGS = {"help_option_names": ["?", "--help"]}

app = typer.Typer(context_settings=CONTEXT_SETTINGS)
app.add_typer(clishow.app, name="show")

tty = utils.tty


def _format_flags(do_json, do_yaml, do_csv, do_table, default: str = "rich"):
    return cli.get_format(do_json=do_json, do_yaml=do_yaml, do_csv=do_csv, do_table=do_table, default=default)


@app.command(
    short_help="Segment the ROI of a latent image",
    help="Learn a dictionary on the image's own patches, vote with its ridge-valley atoms and write the convex ROI.",
)
def segment(
    image: Path = typer.Argument(..., metavar="IMAGE", help="latent image (.pgm or .png)", show_default=False),
    roi_file: Path = typer.Argument(..., metavar="ROI_OUT", help="ROI polygon output file", show_default=False),
    dump: Path = typer.Option(
        None, "--dump", help="Write dictionary.lmd, atoms.tsv, votes.pgm, mask.pgm and config.yaml here", show_default=False,
    ),
    min_file: Path = typer.Option(None, "--min", help="Minutiae file to restrict to the ROI (needs --extract-out)"),
    extract_out: Path = typer.Option(
        None, "--extract-out", help="Write ROI minutiae here (extracted from IMAGE unless --min is given)",
    ),
    patch_size: int = typer.Option(None, "--patch-size", "-w", help="Patch side w [default: 32]", show_default=False),
    stride: int = typer.Option(None, "--stride", help="Patch grid stride [default: 8]", show_default=False),
    atoms: int = typer.Option(None, "--atoms", help="Dictionary size [default: 100]", show_default=False),
    sparsity: int = typer.Option(None, "--sparsity", "-K", help="Nonzeros per code [default: 2]", show_default=False),
    epochs: int = typer.Option(None, "--epochs", help="Training epochs [default: 5]", show_default=False),
    hull_of_all: Optional[bool] = typer.Option(
        None, "--hull-of-all/--largest", help="Hull of every foreground component instead of the largest", show_default=False,
    ),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.atomid import format_atom_report
    from latentmatch.dictlearn import save_dictionary
    from latentmatch.imagecore import load_image, save_pgm
    from latentmatch.minutiae import extract_minutiae, load_minutiae, mask_by_roi, save_minutiae
    from latentmatch.segmentation import SegmentConfig, mask_image, save_roi, segment_detailed, vote_map_image

    cli.check_input(image, min_file)
    if min_file and not extract_out:
        typer.secho("ERROR: --min needs --extract-out", fg="red", err=True)
        raise typer.Exit(1)

    with cli.exit_on_error():
        run = cli.run_config(
            imagecore={"patch_size": patch_size, "stride": stride},
            dictlearn={"n_atoms": atoms, "sparsity": sparsity, "epochs": epochs},
            segmentation={"hull_of_all": hull_of_all},
        )
        img = load_image(image)
        with utils.spinner(f"Segmenting {image.name}"):
            result = segment_detailed(img, SegmentConfig.from_run(run))
        save_roi(result.roi, roi_file)

        if dump:
            dump.mkdir(parents=True, exist_ok=True)
            save_dictionary(result.dictionary, dump / "dictionary.lmd")
            cli.write_file(dump / "atoms.tsv", format_atom_report(result.analyses), quiet=True)
            save_pgm(vote_map_image(result.votes), dump / "votes.pgm")
            save_pgm(mask_image(result.mask), dump / "mask.pgm")
            cli.write_file(dump / "config.yaml", run.as_yaml(echo=True), quiet=True)

        if extract_out:
            source = load_minutiae(min_file) if min_file else extract_minutiae(img, None, run.extractor)
            kept = mask_by_roi(source, result.roi)
            save_minutiae(kept, extract_out)
            log.info(f"{image.name}: {len(kept)}/{len(source)} minutiae inside the ROI")

    caption = (
        f"{len(result.roi)} vertices, area {result.roi.area:.0f} px, mask {result.coverage:.1%} of image, "
        f"{result.dictionary.ridge_count}/{result.dictionary.atom_count} ridge-valley atoms"
    )
    cli.display_results(
        cleaner.roi_rows(result.roi),
        tablefmt=_format_flags(do_json, do_yaml, do_csv, do_table),
        title=f"ROI {image.name}",
        caption=caption,
    )


@app.command(
    short_help="Align a gallery minutiae set onto a latent",
    help="Run the genetic-algorithm matcher and report the number of paired minutiae as the score.",
)
def match(
    latent: Path = typer.Argument(..., metavar="LATENT_MIN", help="latent minutiae file", show_default=False),
    gallery: Path = typer.Argument(..., metavar="GALLERY_MIN", help="gallery minutiae file", show_default=False),
    out: Path = typer.Option(None, "--out", help="Write the match result (score, transform, pairs)"),
    history: Path = typer.Option(None, "--history", help="Write the best-fitness-per-generation CSV"),
    population: int = typer.Option(None, "--population", help="Chromosomes per generation [default: 400]", show_default=False),
    g_max: int = typer.Option(None, "--g-max", help="Generation limit [default: 200]", show_default=False),
    p_crossover: float = typer.Option(None, "--pc", help="Crossover probability [default: 0.2]", show_default=False),
    p_mutation: float = typer.Option(None, "--pm", help="Mutation probability [default: 0.05]", show_default=False),
    delta_d: float = typer.Option(None, "--delta-d", help="Pairing distance tolerance px [default: 15]", show_default=False),
    delta_o: float = typer.Option(None, "--delta-o", help="Pairing orientation tolerance deg [default: 20]", show_default=False),
    seed_fraction: float = typer.Option(
        None, "--seed-fraction", help="Share of the first population seeded from minutia pairs", show_default=False,
    ),
    refine: Optional[bool] = typer.Option(None, "--refine/--no-refine", help="Least-squares polish of the GA best", show_default=False),
    restarts: int = typer.Option(
        None, "--restarts", help="Extra GA runs after a weak run [default: 4]", show_default=False,
    ),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.gamatch import fitness_history_csv, format_match_result, run_ga
    from latentmatch.minutiae import load_minutiae

    cli.check_input(latent, gallery)
    with cli.exit_on_error():
        run = cli.run_config(
            ga={
                "population": population, "g_max": g_max, "p_crossover": p_crossover, "p_mutation": p_mutation,
                "delta_d": delta_d, "delta_o": delta_o, "seed_fraction": seed_fraction, "refine": refine,
                "restarts": restarts,
            }
        )
        L, C = load_minutiae(latent), load_minutiae(gallery)
        with utils.spinner(f"Matching {gallery.name} -> {latent.name}"):
            result = run_ga(C, L, run.ga, threads=run.threads)
        if out:
            cli.write_file(out, format_match_result(result))
        if history:
            body = fitness_history_csv(result).replace("\r\n", "\n")
            cli.write_file(history, utils.yaml_header({"config": {"seed": run.seed, "ga": run.as_dict()["ga"]}}) + body)

    cli.display_results(
        cleaner.match_rows(result),
        tablefmt=_format_flags(do_json, do_yaml, do_csv, do_table),
        title=f"{C.id or gallery.stem} -> {L.id or latent.stem}",
        caption=f"{result.score} paired minutiae of |C|={len(C)}, |L|={len(L)}",
    )


@app.command(
    short_help="Run the gallery identification protocol",
    help="Match every manifest latent against random R-print gallery subsets containing its mate and report CMC.",
)
def identify(
    manifest: Path = typer.Argument(..., metavar="MANIFEST", help="lines 'latent <id> <path> mate=<id> [category=...]'"),
    gallery_dir: Path = typer.Argument(..., metavar="GALLERY_DIR", help="directory of <id>.min / .pgm / .png entries"),
    report: Path = typer.Argument(..., metavar="REPORT_CSV", help="per-cell rank report", show_default=False),
    summary: Path = typer.Option(None, "--summary", help="Write the YAML summary (mean penetration, CMC) here"),
    subset_size: int = typer.Option(None, "--subset-size", "-R", help="Gallery subset size [default: 50]", show_default=False),
    trials: int = typer.Option(None, "--trials", help="Repetitions per latent [default: 10]", show_default=False),
    tie_policy: TiePolicy = typer.Option(None, "--tie-policy", help="Mate rank among equal scores [default: id]", show_default=False),
    scenario: Scenario = typer.Option(None, "--scenario", help="Image latents: ROI or whole-image minutiae [default: roi]", show_default=False),
    population: int = typer.Option(None, "--population", help="GA chromosomes [default: 400]", show_default=False),
    g_max: int = typer.Option(None, "--g-max", help="GA generation limit [default: 200]", show_default=False),
    cells: bool = typer.Option(False, "--cells", help="Show one row per (trial, latent) instead of the CMC"),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.identify import load_gallery, load_manifest, rank_rate, report_csv, run_trials, summary_yaml
    from latentmatch.segmentation import SegmentConfig

    cli.check_input(manifest)
    with cli.exit_on_error():
        run = cli.run_config(
            identify={"subset_size": subset_size, "trials": trials, "tie_policy": tie_policy, "scenario": scenario},
            ga={"population": population, "g_max": g_max},
        )
        gallery = load_gallery(gallery_dir, run.extractor, threads=run.threads)
        latents = load_manifest(
            manifest, run.extractor, run.plan.scenario, SegmentConfig.from_run(run), threads=run.threads
        )
        with utils.spinner(f"{len(latents)} latents x {run.plan.trials} trials against {len(gallery)} prints"):
            result = run_trials(latents, gallery, run.plan, run.ga, threads=run.threads)
        echo = run.as_dict(echo=True)
        cli.write_file(report, report_csv(result, echo))
        if summary:
            cli.write_file(summary, summary_yaml(result, echo))

    cli.display_results(
        cleaner.trial_rows(result) if cells else cleaner.cmc_rows(result),
        tablefmt=_format_flags(do_json, do_yaml, do_csv, do_table),
        title="Trial cells" if cells else "CMC",
        caption=f"mean penetration {result.mean_penetration:.3f}%, rank-1 {rank_rate(result, 1):.3f} over {len(result.cells)} searches",
    )


@app.command(
    "eval-seg",
    short_help="GMPR / FMAR / AUC of ROI minutiae extraction",
    help="Score MS1 (ground truth), MS2 (whole image) and MS3 (ROI) minutiae files, or a batch manifest of them.",
)
def eval_seg(
    ms1: Path = typer.Argument(None, metavar="MS1", help="ground-truth minutiae", show_default=False),
    ms2: Path = typer.Argument(None, metavar="MS2", help="whole-image minutiae", show_default=False),
    ms3: Path = typer.Argument(None, metavar="MS3", help="ROI minutiae", show_default=False),
    manifest: Path = typer.Option(None, "--manifest", help="Batch lines '<id> <ms1> <ms2> <ms3>'"),
    out: Path = typer.Option(None, "--out", help="Write the CSV report (config echo header, one row per image, mean row)"),
    mode: EvalMode = typer.Option(None, "--mode", help="Undefined metrics: exclude from means or count as 0 [default: exclude]", show_default=False),
    delta_d: float = typer.Option(None, "--delta-d", help="Correspondence distance px [default: 15]", show_default=False),
    delta_o: float = typer.Option(None, "--delta-o", help="Correspondence orientation deg [default: 20]", show_default=False),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.evaluate import MinutiaeEvalInput, batch_summary, evaluate_manifest, gmpr_fmar, results_csv
    from latentmatch.minutiae import load_minutiae

    files = [p for p in (ms1, ms2, ms3) if p is not None]
    if bool(manifest) == bool(files) or (files and len(files) != 3):
        typer.secho("ERROR: give either MS1 MS2 MS3 or --manifest", fg="red", err=True)
        raise typer.Exit(1)
    cli.check_input(manifest, *files)

    with cli.exit_on_error():
        run = cli.run_config(evaluate={"mode": mode, "delta_d": delta_d, "delta_o": delta_o})
        cfg = run.eval
        if manifest:
            results = evaluate_manifest(manifest, cfg, threads=run.threads)
        else:
            sets = [load_minutiae(p) for p in files]
            results = [gmpr_fmar(MinutiaeEvalInput(*sets, delta_d=cfg.delta_d, delta_o=cfg.delta_o, id=ms1.stem))]
        summary = batch_summary(results, cfg.mode)
        if out:
            cli.write_file(out, results_csv(results, summary, run.as_dict(echo=True)))

    undefined = ", ".join(f"{k} {v}" for k, v in summary.undefined.items() if v)
    cli.display_results(
        cleaner.seg_eval_rows(results, summary),
        tablefmt=_format_flags(do_json, do_yaml, do_csv, do_table),
        title="Segmentation evaluation",
        caption=f"mode {summary.mode.value}{f', undefined: {undefined}' if undefined else ''}",
    )


@app.command(short_help="Render a synthetic latent from a spec file", help="Write image.pgm, mask.pgm, truth.min and spec.yaml.")
def synth(
    spec_file: Path = typer.Argument(..., metavar="SPEC", help="YAML synthetic spec", show_default=False),
    out_dir: Path = typer.Argument(..., metavar="OUT_DIR", help="bundle directory", show_default=False),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from dataclasses import replace

    from latentmatch.synthgen import generate, load_spec, write_bundle

    cli.check_input(spec_file)
    with cli.exit_on_error():
        spec = load_spec(spec_file)
        if cli.seed is not None:
            spec = replace(spec, seed=cli.seed)
        img, truth = generate(spec, id=spec_file.stem)
        files = write_bundle(out_dir, img, truth)

    cli.display_results(
        [{"file": str(f), "bytes": f.stat().st_size} for f in files],
        tablefmt="tabulate" if not tty else "rich",
        title=f"{spec_file.stem}: {img.width}x{img.height}, {len(truth.minutiae)} planted minutiae",
    )


@app.command(
    "synth-gallery",
    short_help="Write a planted minutiae gallery with latents and a manifest",
    help="Mates, impostors and latents planted as transformed, jittered, thinned and cluttered copies of their mates.",
)
def synth_gallery(
    out_dir: Path = typer.Argument(..., metavar="OUT_DIR", help="gallery/, latents/, manifest.txt, truth.yaml", show_default=False),
    latents: int = typer.Option(5, "--latents", help="Latents, each with its own mate"),
    impostors: int = typer.Option(5, "--impostors", help="Non-mate gallery prints"),
    points: int = typer.Option(30, "--points", help="Minutiae per gallery print"),
    jitter: float = typer.Option(2.0, "--jitter", help="Positional noise sigma px"),
    dropout: float = typer.Option(0.2, "--dropout", help="Fraction of mate minutiae missing from the latent"),
    clutter: int = typer.Option(5, "--clutter", help="Spurious latent minutiae"),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.synthgen import make_planted_gallery, write_planted_gallery

    with cli.exit_on_error():
        run = cli.run_config()
        pg = make_planted_gallery(
            n_latents=latents, n_impostors=impostors, points=points, seed=run.seed,
            jitter=jitter, dropout=dropout, clutter=clutter,
        )
        manifest = write_planted_gallery(out_dir, pg)

    rows = [
        {"latent": q.id, "mate": q.mate_id, "points": len(q.minutiae), "surviving": len(pg.planted[q.id].pairs)}
        for q in pg.latents
    ]
    cli.display_results(rows, tablefmt="tabulate" if not tty else "rich", title=f"{len(pg.gallery)} gallery prints", caption=str(manifest))


@app.command(
    "learn-dict",
    short_help="Train and label a dictionary on one image",
    help="Online dictionary learning on the image's patch grid, then ridge-valley atom identification.",
)
def learn_dict(
    image: Path = typer.Argument(..., metavar="IMAGE", help="training image (.pgm or .png)", show_default=False),
    out: Path = typer.Argument(..., metavar="OUT", help="dictionary container (.lmd)", show_default=False),
    report: Path = typer.Option(None, "--report", help="Write the tab-separated atom report"),
    patch_size: int = typer.Option(None, "--patch-size", "-w", help="Patch side w [default: 32]", show_default=False),
    stride: int = typer.Option(None, "--stride", help="Patch grid stride [default: 8]", show_default=False),
    atoms: int = typer.Option(None, "--atoms", help="Dictionary size [default: 100]", show_default=False),
    sparsity: int = typer.Option(None, "--sparsity", "-K", help="Nonzeros per code [default: 2]", show_default=False),
    epochs: int = typer.Option(None, "--epochs", help="Training epochs [default: 5]", show_default=False),
    coding: CodingMode = typer.Option(None, "--coding", help="Sparse coder used while training [default: omp]", show_default=False),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.atomid import classify_atoms, format_atom_report, label_dictionary
    from latentmatch.dictlearn import learn_dictionary, save_dictionary
    from latentmatch.imagecore import PatchGrid, load_image, normalize_columns, patch_windows

    cli.check_input(image)
    with cli.exit_on_error():
        run = cli.run_config(
            imagecore={"patch_size": patch_size, "stride": stride},
            dictlearn={"n_atoms": atoms, "sparsity": sparsity, "epochs": epochs, "coding": coding},
        )
        img = load_image(image)
        X = normalize_columns(patch_windows(img, PatchGrid.for_image(img, run.patch)).T)
        with utils.spinner(f"Training {run.train.n_atoms} atoms on {X.shape[1]} patches"):
            D = learn_dictionary(X, run.train, trained_on=image.stem)
            analyses = classify_atoms(D, run.atoms, threads=run.threads)
        D = label_dictionary(D, analyses)
        save_dictionary(D, out)
        if report:
            cli.write_file(report, format_atom_report(analyses))

    rows = [{"epoch": i, "mean error": utils.fmt_float(e, 6)} for i, e in enumerate(D.error_history)]
    cli.display_results(
        rows,
        tablefmt="tabulate" if not tty else "rich",
        title=f"{out.name}: {D.atom_dim}x{D.atom_count}",
        caption=f"{D.ridge_count} ridge-valley atoms",
    )


def version_callback(value: bool):
    if value:
        typer.echo(f"latentmatch {__version__}")
        typer.echo(f"dictionary container {constants.DICT_FORMAT_VERSION}")
        typer.echo(f"minutiae format {constants.MINUTIAE_FORMAT_VERSION}")
        typer.echo(f"roi format {constants.ROI_FORMAT_VERSION}")
        typer.echo(f"match result format {constants.MATCH_FORMAT_VERSION}")
        raise typer.Exit()


@app.callback()
def callback(
    ctx: typer.Context,
    debug: bool = typer.Option(
        False, "--debug", is_flag=True, envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging",
        callback=cli.debug_callback,
    ),
    config_file: Path = typer.Option(
        None, "--config", envvar="LATENTMATCH_CONFIG", help="Config file (yaml/json)", callback=cli.config_callback,
    ),
    seed: int = typer.Option(None, "--seed", help="Global seed for every randomized stage [default: 0]", show_default=False),
    threads: int = typer.Option(None, "--threads", help="Worker threads for parallel stages [default: 1]", show_default=False),
    set_: List[str] = typer.Option(None, "--set", metavar="SECTION.KEY=VALUE", help="Override one config value (repeatable)"),
    version: bool = typer.Option(None, "--version", is_eager=True, callback=version_callback, help="Show versions and exit"),
) -> None:
    """
    Latent fingerprint segmentation, matching and evaluation toolkit
    """
    if ctx.resilient_parsing:
        return
    cli.seed, cli.threads = seed, threads
    with cli.exit_on_error():
        cli.overrides = parse_set_option(set_)


log.debug(f'{__name__} called with Arguments: {" ".join(sys.argv)}')


def main() -> None:
    """Console entry point: usage errors exit 1 instead of click's 2."""
    try:
        rv = app(standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        sys.exit(1)
    except click.exceptions.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        typer.echo("Aborted!", err=True)
        sys.exit(1)
    sys.exit(rv if isinstance(rv, int) else 0)


if __name__ == "__main__":
    main()
