#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import shutil
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Union

import typer
import yaml
from halo import Halo
from pygments import formatters, highlight, lexers
from tabulate import tabulate


class Utils:
    class TTY:
        def __init__(self):
            self._rows, self._cols = self.get_tty_size()

        def get_tty_size(self):
            s = shutil.get_terminal_size()
            return s.lines, s.columns

        def __bool__(self):
            return sys.stdout.isatty()

        @property
        def rows(self):
            self._rows, self._cols = self.get_tty_size()
            return self._rows

        @property
        def cols(self):
            self._rows, self._cols = self.get_tty_size()
            return self._cols

    tty = TTY()

    @staticmethod
    def listify(var):
        if isinstance(var, tuple):
            return list(var)
        return var if isinstance(var, list) or var is None else [var]

    @staticmethod
    def strip_none(_dict: Union[dict, None]) -> Union[dict, None]:
        """strip all keys from a dict where value is NoneType"""
        if not isinstance(_dict, dict):
            return _dict
        return {k: v for k, v in _dict.items() if v is not None}

    @staticmethod
    def fmt_float(value: Any, digits: int = 4) -> Any:
        if isinstance(value, float):
            return round(value, digits)
        return value

    @staticmethod
    def yaml_header(data: Dict[str, Any], prefix: str = "# ") -> str:
        """``data`` as YAML with every line commented, for report headers."""
        body = yaml.safe_dump(data, sort_keys=False).rstrip("\n")
        return "\n".join(f"{prefix}{line}" for line in body.splitlines()) + "\n"

    @contextmanager
    def spinner(self, spin_txt: str, spinner: str = "dots") -> Iterator[None]:
        """Halo spinner around a long stage, only when attached to a terminal."""
        spin = Halo(text=spin_txt, spinner=spinner, stream=sys.stderr, enabled=bool(self.tty))
        spin.start()
        try:
            yield
        except Exception:
            spin.fail()
            raise
        else:
            spin.succeed()

    class Output:
        def __init__(self, rawdata: str = "", prettydata: str = ""):
            self._file = rawdata
            self.tty = prettydata

        def __len__(self):
            return len(str(self).splitlines())

        def __str__(self):
            return self.tty or self.file

        def __iter__(self):
            for line in str(self).splitlines(keepends=True):
                yield line

        @property
        def file(self):
            return typer.unstyle(self._file)

    def output(
        self,
        outdata: Union[List[str], List[Dict[str, Any]], Dict[str, Any]],
        tablefmt: str = "rich",
        title: str = None,
        caption: str = None,
    ) -> "Utils.Output":
        raw_data = table_data = ""
        _lexer = None
        outdata = outdata if isinstance(outdata, dict) else self.listify(outdata) or []

        # -- // List[str, ...] \\ --  Bypass all formatters (reports, file contents)
        if isinstance(outdata, list) and outdata and all(isinstance(x, str) for x in outdata):
            tablefmt = "strings"

        if tablefmt == "json":
            raw_data = json.dumps(outdata, indent=4)
            _lexer = lexers.JsonLexer

        elif tablefmt in ["yml", "yaml"]:
            raw_data = yaml.safe_dump(outdata, sort_keys=False)
            _lexer = lexers.YamlLexer

        elif tablefmt == "csv":
            import tablib

            data = tablib.Dataset()
            if outdata:
                data.headers = list(outdata[0].keys())
                for row in outdata:
                    data.append([row.get(k, "") for k in data.headers])
            raw_data = table_data = data.export("csv").replace("\r\n", "\n")

        elif tablefmt == "rich":
            from rich.console import Console
            from rich.table import Table
            from rich.box import HORIZONTALS

            console = Console(record=True, width=max(self.tty.cols, 100) if self.tty else 160)
            if outdata and all(isinstance(x, dict) for x in outdata):
                table = Table(
                    show_header=True,
                    title=None if not title else f"[italic cornflower_blue]{title}",
                    header_style="magenta",
                    show_lines=False,
                    box=HORIZONTALS,
                    row_styles=["none", "dark_sea_green"],
                )
                for k in outdata[0].keys():
                    table.add_column(str(k), justify="left", no_wrap=k in ["id", "x", "y"])
                for row in outdata:
                    table.add_row(*["" if v is None else str(v) for v in row.values()])
                if caption:
                    table.caption_justify = "left"
                    table.caption = f"[italic dark_olive_green2]{caption}"

                with console.capture():
                    console.print(table)
                raw_data = console.export_text(clear=False)
                table_data = console.export_text(styles=True)

        elif tablefmt == "tabulate":
            if outdata and all(isinstance(x, dict) for x in outdata):
                raw_data = tabulate(outdata, headers="keys", tablefmt="simple")
                td = raw_data.splitlines(keepends=True)
                table_data = f"{typer.style(td[0], fg='cyan')}{''.join(td[1:])}"
                if title:
                    raw_data = f"{title}\n{raw_data}"
                    table_data = f"{typer.style(title, fg='cyan')}\n{table_data}"

        else:  # strings output No formatting
            raw_data = table_data = "\n".join(outdata)

        if _lexer and raw_data and self.tty:
            table_data = highlight(bytes(raw_data, "UTF-8"), _lexer(), formatters.Terminal256Formatter(style="solarized-dark"))

        return self.Output(rawdata=raw_data, prettydata=table_data or raw_data)
