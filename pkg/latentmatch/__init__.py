#!/usr/bin/env python3
# -*- coding: utf-8 -*-

# flake8: noqa

import json
import os
import sys
from pathlib import Path

import typer

__version__ = "0.1.0"

_calling_script = Path(sys.argv[0])
_pkg_dir = Path(__file__).resolve().parent

if _calling_script.name == "lmcli" or "site-packages" in _pkg_dir.parts:
    base_dir = Path(typer.get_app_dir(__name__))
else:
    base_dir = _pkg_dir.parent  # cloned repo / editable install

from .logger import MyLogger
from . import constants
from .config import Config

config = Config(base_dir=base_dir)

log_dir = base_dir / "logs"
log_dir.mkdir(parents=True, exist_ok=True)
log_file = log_dir / f"{__name__}.log"

if "--debug" in sys.argv:
    config.debug = True  # for the benefit of the messages below

log = MyLogger(log_file, debug=config.debug, show=config.debug, verbose=config.debugv)

log.debug(f"{__name__} __init__ calling script: {_calling_script}, base_dir: {base_dir}", show=False)
log.debugv(f"config data: {json.dumps(config.data, indent=4, default=str)}", show=False)

from .utils import Utils

utils = Utils()

from .clicommon import CLICommon

cli = CLICommon()

if not os.environ.get("LESS"):
    os.environ["LESS"] = "-RX +G"
