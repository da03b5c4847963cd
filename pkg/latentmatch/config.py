#!/usr/bin/env python3
#
# Layered configuration: built-in defaults < config file < command-line overrides.

import dataclasses
import json
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Union

import tablib
import yaml

from .exceptions import ConfigError

if TYPE_CHECKING:  # pragma: no cover
    from .atomid import AtomIdConfig
    from .dictlearn import TrainConfig
    from .evaluate import EvalConfig
    from .gamatch import GaConfig
    from .identify import TrialPlan
    from .imagecore import PatchConfig
    from .minutiae import ExtractorConfig
    from .segmentation import MorphConfig

valid_ext = [".yaml", ".yml", ".json"]
TOP_LEVEL_KEYS = ["debug", "debugv", "no_pager", "seed", "threads"]


def _get_config_file(dirs: List[Path]) -> Optional[Path]:
    for _dir in dirs:
        for ext in valid_ext:
            f = _dir / f"config{ext}"
            if f.is_file():
                return f


@dataclass(frozen=True)
class RunConfig:
    """Every module's config resolved for one command invocation."""
    patch: "PatchConfig"
    train: "TrainConfig"
    atoms: "AtomIdConfig"
    morph: "MorphConfig"
    extractor: "ExtractorConfig"
    ga: "GaConfig"
    plan: "TrialPlan"
    eval: "EvalConfig"
    seed: int
    threads: int

    def as_dict(self, echo: bool = False) -> Dict[str, Any]:
        """Plain sections.  ``echo`` drops threads, for the config headers written into result files."""
        def _plain(v):
            if isinstance(v, tuple):
                return [_plain(x) for x in v]
            return v.value if isinstance(v, Enum) else v

        out = {"seed": self.seed} if echo else {"seed": self.seed, "threads": self.threads}
        for section, field in SECTION_FIELDS.items():
            obj = getattr(self, field)
            out[section] = {k: _plain(v) for k, v in dataclasses.asdict(obj).items()}
        return out

    def as_yaml(self, echo: bool = False) -> str:
        return yaml.safe_dump(self.as_dict(echo), sort_keys=False)


# config.yaml section -> RunConfig attribute
SECTION_FIELDS = {
    "imagecore": "patch",
    "dictlearn": "train",
    "atomid": "atoms",
    "segmentation": "morph",
    "extractor": "extractor",
    "ga": "ga",
    "identify": "plan",
    "evaluate": "eval",
}


def parse_set_option(items: Optional[List[str]]) -> Dict[str, Dict[str, Any]]:
    """Turn repeated ``--set section.key=value`` strings into nested overrides."""
    out: Dict[str, Dict[str, Any]] = {}
    for item in items or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        out.setdefault(section, {})[name] = yaml.safe_load(value)
    return out


class Config:
    def __init__(self, base_dir: Path = None, file: Union[str, Path] = None):
        if base_dir and isinstance(base_dir, str):
            base_dir = Path(base_dir)
        self.base_dir = base_dir or Path(__file__).parent.parent
        cwd = Path().cwd()
        env_file = os.environ.get("LATENTMATCH_CONFIG")
        if file or env_file:
            self.file = Path(file or env_file)
        else:
            self.file = _get_config_file(
                [
                    Path().home() / ".config" / "latentmatch",
                    Path().home() / ".latentmatch",
                    cwd / "config",
                    cwd,
                ]
            )
        self.dir = self.file.parent if self.file else self.base_dir / "config"
        self.outdir = cwd / "out" if (cwd / "out").is_dir() else cwd
        self.data: Dict[str, Any] = {}
        if self.file:
            self.data = self.get_file_data(self.file) or {}
        self.debug = bool(self.data.get("debug", False)) or os.environ.get("LATENTMATCH_DEBUG", "") not in ["", "0"]
        self.debugv = bool(self.data.get("debugv", False))

    def __bool__(self):
        return len(self.data) > 0

    def __len__(self):
        return len(self.data)

    def __getattr__(self, item: str) -> Any:
        if item in ("data", "__setstate__"):
            raise AttributeError(item)
        return self.data.get(item)

    def get(self, key: str, default: Any = None) -> Any:
        return self.data.get(key, default)

    def load(self, file: Union[str, Path]) -> None:
        """Replace the active config file (``--config``)."""
        file = Path(file)
        if not file.is_file():
            raise ConfigError(f"config file {file} not found")
        self.file, self.dir = file, file.parent
        self.data = self.get_file_data(file) or {}
        self.debug = self.debug or bool(self.data.get("debug", False))
        self.debugv = bool(self.data.get("debugv", False))

    @staticmethod
    def get_file_data(import_file: Path) -> Union[dict, tablib.Dataset, None]:
        """Return dict from yaml/json file (tablib Dataset for csv/tsv)."""
        if import_file.exists() and import_file.stat().st_size > 0:
            with import_file.open() as f:
                try:
                    if import_file.suffix == ".json":
                        return json.loads(f.read())
                    elif import_file.suffix in [".yaml", ".yml"]:
                        return yaml.load(f, Loader=yaml.SafeLoader)
                    elif import_file.suffix in [".csv", ".tsv"]:
                        return tablib.Dataset().load(f.read(), format=import_file.suffix.lstrip("."))
                    else:
                        raise ConfigError(f"{import_file.name}: provide a .yaml, .yml or .json file")
                except ConfigError:
                    raise
                except Exception as e:
                    raise ConfigError(f"Unable to load configuration from {import_file}: {e.__class__.__name__}: {e}")

    def run_config(
        self,
        overrides: Optional[Dict[str, Dict[str, Any]]] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> RunConfig:
        """Resolve the effective configuration.

        ``overrides`` holds flag values keyed like the config file sections.
        Flags win over the file, the file wins over the built-in defaults.
        """
        from .atomid import AtomIdConfig
        from .dictlearn import TrainConfig
        from .evaluate import EvalConfig
        from .gamatch import GaConfig
        from .identify import TrialPlan
        from .imagecore import PatchConfig
        from .minutiae import ExtractorConfig
        from .segmentation import MorphConfig
        from . import constants

        data = dict(self.data or {})
        unknown = [k for k in data if k not in TOP_LEVEL_KEYS and k not in SECTION_FIELDS]
        if unknown:
            raise ConfigError(f"Unknown config section(s) {', '.join(map(str, unknown))} in {self.file}")

        overrides = overrides or {}
        for section in overrides:
            if section not in SECTION_FIELDS:
                raise ConfigError(f"Unknown config section {section!r}, valid: {', '.join(SECTION_FIELDS)}")

        _seed = seed if seed is not None else data.get("seed", constants.SEED)
        _threads = threads if threads is not None else data.get("threads", 1)
        if not isinstance(_seed, int) or _seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {_seed!r}")
        if not isinstance(_threads, int) or _threads < 1:
            raise ConfigError(f"threads must be >= 1, got {_threads!r}")

        classes = {
            "imagecore": PatchConfig,
            "dictlearn": TrainConfig,
            "atomid": AtomIdConfig,
            "segmentation": MorphConfig,
            "extractor": ExtractorConfig,
            "ga": GaConfig,
            "identify": TrialPlan,
            "evaluate": EvalConfig,
        }
        built = {}
        for section, cls in classes.items():
            values = dict(data.get(section) or {})
            values.update(overrides.get(section, {}))
            names = {f.name for f in dataclasses.fields(cls)}
            bad = [k for k in values if k not in names]
            if bad:
                raise ConfigError(
                    f"Unknown key(s) {', '.join(bad)} in section {section!r}, valid: {', '.join(sorted(names))}"
                )
            if "seed" in names and "seed" not in values:
                values["seed"] = _seed
            for k, v in values.items():
                if isinstance(v, list):
                    values[k] = tuple(v)
            try:
                built[SECTION_FIELDS[section]] = cls(**values)
            except ConfigError:
                raise
            except (TypeError, ValueError) as e:
                raise ConfigError(f"[{section}] {e}")

        if built["morph"].min_area is None:
            w = built["patch"].patch_size
            built["morph"] = dataclasses.replace(built["morph"], min_area=2 * w * w)

        return RunConfig(seed=_seed, threads=_threads, **built)
