from pathlib import Path
from typing import List, Union
from logging.handlers import RotatingFileHandler

import logging
import typer


log_colors = {
    "error": typer.colors.RED,
    "exception": typer.colors.RED,
    "critical": typer.colors.RED,
    "warning": typer.colors.YELLOW,
    "debug": typer.colors.BLUE,
}


class MyLogger:
    """File logger with optional colored echo to the terminal.

    Every message goes to a rotating log file under ``<base_dir>/logs``.  When
    ``show`` is set (``--debug`` sets it), messages are echoed as well.
    """
    def __init__(self, log_file: Union[str, Path], debug: bool = False, show: bool = False, verbose: bool = False):
        self._DEBUG = debug
        self.verbose = verbose
        self.log_file = log_file if isinstance(log_file, Path) else Path(log_file)
        self._log = self.get_logger()
        self.name = self._log.name
        self.show = show
        self.shown: List[str] = []

    def __getattr__(self, name: str):
        if "_log" in self.__dict__ and hasattr(self._log, name):
            return getattr(self._log, name)
        raise AttributeError(f"'MyLogger' object has no attribute '{name}'")

    def get_logger(self) -> logging.Logger:
        fmt_str = "%(asctime)s [%(process)d][%(levelname)s]: %(message)s"
        date_str = "%m/%d/%Y %I:%M:%S %p"
        _log = logging.getLogger(self.log_file.stem)
        if not _log.handlers:
            handler = RotatingFileHandler(self.log_file.absolute(), maxBytes=250000, backupCount=5)
            handler.setFormatter(logging.Formatter(fmt_str, datefmt=date_str))
            _log.addHandler(handler)
        _log.setLevel(logging.DEBUG if self.DEBUG else logging.INFO)
        _log.propagate = False
        return _log

    def log_print(self, msgs, log: bool = False, show: bool = False, level: str = "info", *args, **kwargs):
        msgs = [msgs] if not isinstance(msgs, list) else msgs
        _logged = []
        for m in map(str, msgs):
            if log and m not in _logged:
                getattr(self._log, level)(m, *args, **kwargs)
                _logged.append(m)

        if show or (show is None and self.show):
            for m in map(str, msgs):
                typer.secho(m, fg=log_colors.get(level), err=True)
                self.shown.append(m)

    @property
    def DEBUG(self):
        return self._DEBUG

    @DEBUG.setter
    def DEBUG(self, value: bool = False):
        self._DEBUG = value
        self.show = value
        self._log.setLevel(logging.DEBUG if value else logging.INFO)

    def debug(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, level="debug", *args, **kwargs)

    def debugv(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        """More verbose debugging (array dumps, per-generation detail), enabled by ``debugv: true``."""
        if self.DEBUG and self.verbose:
            self.log_print(msgs, log=log, show=show, level="debug", *args, **kwargs)

    def info(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, *args, **kwargs)

    def warning(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, level="warning", *args, **kwargs)

    def error(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, level="error", *args, **kwargs)

    def exception(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, level="exception", *args, **kwargs)

    def critical(self, msgs: Union[list, str], log: bool = True, show: bool = None, *args, **kwargs) -> None:
        self.log_print(msgs, log=log, show=show, level="critical", *args, **kwargs)

    def setLevel(self, level):
        self._log.setLevel(level)
