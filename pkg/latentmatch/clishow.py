#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sys
from pathlib import Path

import typer

# Detect if called from pypi installed package or via cloned github repo (development)
try:
    from latentmatch import cleaner, cli, config, utils
except (ImportError, ModuleNotFoundError) as e:
    pkg_dir = Path(__file__).absolute().parent
    if pkg_dir.name == "latentmatch":
        sys.path.insert(0, str(pkg_dir.parent))
        from latentmatch import cleaner, cli, config, utils
    else:
        print(pkg_dir.parts)
        raise e

from latentmatch.constants import LABEL_RIDGE, LABEL_UNLABELED

app = typer.Typer()

tty = utils.tty


@app.command("config", short_help="Show the effective configuration")
def show_config(
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    outfile: Path = typer.Option(None, "--out", help="Output to file (and terminal)", writable=True),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    with cli.exit_on_error():
        effective = cli.run_config().as_dict()

    tablefmt = cli.get_format(do_json, do_yaml, do_csv, do_table, default="yaml")
    data = effective if tablefmt in ["json", "yaml"] else cleaner.config_rows(effective)
    cli.display_results(
        data,
        tablefmt=tablefmt,
        title="Effective configuration",
        caption=f"config file: {config.file or 'none (built-in defaults)'}",
        outfile=outfile,
    )


@app.command("dict", short_help="Show a dictionary container")
def show_dict(
    dict_file: Path = typer.Argument(..., metavar="DICT", help="LMDICT1 dictionary file", show_default=False),
    analyze: bool = typer.Option(False, "--analyze", help="Re-run atom identification and show xcorr / period"),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    outfile: Path = typer.Option(None, "--out", help="Output to file (and terminal)", writable=True),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.atomid import classify_atoms
    from latentmatch.dictlearn import load_dictionary

    cli.check_input(dict_file)
    with cli.exit_on_error():
        D = load_dictionary(dict_file)
        if analyze:
            run = cli.run_config()
            rows = cleaner.atom_rows(classify_atoms(D, run.atoms, threads=run.threads))
        else:
            names = {LABEL_RIDGE: "ridge-valley", LABEL_UNLABELED: "unlabeled"}
            rows = [{"index": k, "label": names.get(int(lb), "other")} for k, lb in enumerate(D.labels)]

    cli.display_results(
        rows,
        tablefmt=cli.get_format(do_json, do_yaml, do_csv, do_table),
        title=f"{dict_file.name}: {D.atom_dim}x{D.atom_count}",
        caption=f"{D.ridge_count} ridge-valley atoms{'' if D.is_labeled else ' (unlabeled)'}",
        outfile=outfile,
    )


@app.command("roi", short_help="Show an ROI polygon file")
def show_roi(
    roi_file: Path = typer.Argument(..., metavar="ROI", help="ROI polygon file", show_default=False),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    outfile: Path = typer.Option(None, "--out", help="Output to file (and terminal)", writable=True),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.segmentation import load_roi

    cli.check_input(roi_file)
    with cli.exit_on_error():
        roi = load_roi(roi_file)

    cli.display_results(
        cleaner.roi_rows(roi),
        tablefmt=cli.get_format(do_json, do_yaml, do_csv, do_table),
        title=roi_file.name,
        caption="empty ROI" if roi.is_empty else f"{len(roi)} vertices, area {roi.area:.0f} px",
        outfile=outfile,
    )


@app.command("minutiae", short_help="Show a minutiae file")
def show_minutiae(
    min_file: Path = typer.Argument(..., metavar="MINUTIAE", help="minutiae file (x y orientation type)", show_default=False),
    do_json: bool = typer.Option(False, "--json", is_flag=True, help="Output in JSON"),
    do_yaml: bool = typer.Option(False, "--yaml", is_flag=True, help="Output in YAML"),
    do_csv: bool = typer.Option(False, "--csv", is_flag=True, help="Output in CSV"),
    do_table: bool = typer.Option(False, "--table", is_flag=True, help="Output in table format"),
    outfile: Path = typer.Option(None, "--out", help="Output to file (and terminal)", writable=True),
    debug: bool = typer.Option(
        False, "--debug", envvar="LATENTMATCH_DEBUG", help="Enable Additional Debug Logging", callback=cli.debug_callback,
    ),
) -> None:
    from latentmatch.minutiae import load_minutiae

    cli.check_input(min_file)
    with cli.exit_on_error():
        ms = load_minutiae(min_file)

    types = [m.mtype.value for m in ms]
    cli.display_results(
        cleaner.minutiae_rows(ms),
        tablefmt=cli.get_format(do_json, do_yaml, do_csv, do_table),
        title=ms.id or min_file.stem,
        caption=f"{len(ms)} minutiae: {types.count('E')} endings, {types.count('B')} bifurcations, {types.count('U')} unknown",
        outfile=outfile,
    )


@app.callback()
def callback():
    """
    Show configuration and latentmatch files
    """
    pass


if __name__ == "__main__":
    app()
