#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import traceback
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import typer

from latentmatch import config, log, utils
from latentmatch.constants import FormatType
from latentmatch.exceptions import InputError, LatentMatchException

tty = utils.tty


class CLICommon:
    def __init__(self):
        self.overrides: Dict[str, Dict[str, Any]] = {}
        self.seed: Optional[int] = None
        self.threads: Optional[int] = None

    @staticmethod
    def debug_callback(ctx: typer.Context, debug: bool):
        if ctx.resilient_parsing:  # tab completion, return without validating
            return False

        if debug:
            log.DEBUG = config.debug = debug
            return debug

    @staticmethod
    def config_callback(ctx: typer.Context, file: Path):
        if ctx.resilient_parsing or file is None:
            return file
        if not file.is_file():
            typer.secho(f"ERROR: config file {file} not found", fg="red", err=True)
            raise typer.Exit(1)
        config.load(file)
        log.debug(f"config loaded from {file}")
        return file

    @staticmethod
    def get_format(
        do_json: bool = False, do_yaml: bool = False, do_csv: bool = False, do_table: bool = False, default: str = "rich"
    ) -> FormatType:
        """Simple helper method to return the selected output format type (str)"""
        if do_json:
            return "json"
        elif do_yaml:
            return "yaml"
        elif do_csv:
            return "csv"
        elif do_table:
            return "rich" if default != "rich" else "tabulate"
        else:
            return default

    def run_config(self, **flag_overrides: Dict[str, Any]):
        """Effective config: global --set values, then per-command flags."""
        overrides = {k: dict(v) for k, v in self.overrides.items()}
        for section, values in flag_overrides.items():
            overrides.setdefault(section, {}).update(utils.strip_none(values))
        return config.run_config(overrides, seed=self.seed, threads=self.threads)

    @contextmanager
    def exit_on_error(self) -> Iterator[None]:
        """Map library errors to exit codes: config/usage 1, input 2, anything else 3."""
        try:
            yield
        except typer.Exit:
            raise
        except LatentMatchException as e:
            log.error(f"{e.__class__.__name__}: {e}", show=False)
            typer.secho(f"ERROR: {e}", fg="red", err=True)
            raise typer.Exit(e.exit_code)
        except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
            log.error(f"{e.__class__.__name__}: {e}", show=False)
            typer.secho(f"ERROR: {e}", fg="red", err=True)
            raise typer.Exit(InputError.exit_code)
        except Exception as e:
            log.exception(f"Unhandled {e.__class__.__name__}: {e}\n{traceback.format_exc()}", show=False)
            typer.secho(f"INTERNAL ERROR: {e.__class__.__name__}: {e}", fg="red", err=True)
            raise typer.Exit(3)

    @staticmethod
    def check_input(*paths: Optional[Path]) -> None:
        for p in paths:
            if p is not None and not Path(p).is_file():
                typer.secho(f"ERROR: input file {p} not found", fg="red", err=True)
                raise typer.Exit(InputError.exit_code)

    @staticmethod
    def write_file(outfile: Path, text: Union[str, bytes], quiet: bool = False) -> None:
        outfile = Path(outfile)
        outfile.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(text, bytes):
            outfile.write_bytes(text)
        else:
            outfile.write_text(text)
        log.debug(f"wrote {outfile}")
        if not quiet and tty:
            typer.secho(f"Wrote {outfile}", fg="cyan", err=True)

    @staticmethod
    def _display_results(
        data: Union[List[dict], List[str], Dict[str, Any], None] = None,
        tablefmt: str = "rich",
        title: str = None,
        caption: str = None,
        pager: bool = True,
        outfile: Path = None,
    ):
        if data is None:
            return

        outdata = utils.output(data, tablefmt, title=title, caption=caption)
        if pager and tty and len(outdata) > tty.rows:
            typer.echo_via_pager(str(outdata))
        else:
            typer.echo(str(outdata))

        # -- // Output to file \\ --
        if outfile and outdata:
            CLICommon.write_file(outfile, outdata.file if outdata.file.endswith("\n") else f"{outdata.file}\n")

    def display_results(
        self,
        data: Union[List[dict], List[str], Dict[str, Any], None] = None,
        tablefmt: str = "rich",
        title: str = None,
        caption: str = None,
        pager: bool = True,
        outfile: Path = None,
    ) -> None:
        """Output formatted results to display and optionally to file

        Args:
            data (Union[List[dict], List[str], dict]): rows (or a mapping for json/yaml).
            tablefmt (str, optional): Format of output. Defaults to "rich" (tabular).
            title: (str, optional): Title of output table.
            caption: (str, optional): Caption displayed at bottom of table.
            pager (bool, optional): Page Output / or not. Defaults to True.
            outfile (Path, optional): path/file of output file. Defaults to None.
        """
        pager = False if config.no_pager else pager
        self._display_results(
            data,
            tablefmt=tablefmt,
            title=title,
            caption=caption,
            pager=pager,
            outfile=outfile,
        )

