#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from enum import Enum
from typing import Literal, Tuple

# ------ // file format versions (reported by --version) \\ ------
DICT_MAGIC = b"LMDICT1\0"
DICT_FORMAT_VERSION = "LMDICT1"
MINUTIAE_FORMAT_VERSION = "lm-min/1"
ROI_FORMAT_VERSION = "lm-roi/1"
MATCH_FORMAT_VERSION = "lm-match/1"

LABEL_NOT_RIDGE = 0
LABEL_RIDGE = 1
LABEL_UNLABELED = 0xFF

# ------ // run defaults \\ ------
PATCH_SIZE = 32
STRIDE = 8
N_ATOMS = 100
SPARSITY = 2
EPOCHS = 5
LAMBDA = 0.1
FORGET_RATE = 1.0
TH_XCORR = 0.6
BROAD_PERIOD: Tuple[float, float] = (3.0, 20.0)
VALID_PERIOD: Tuple[float, float] = (5.3, 12.8)
MORPH_ELEMENT = 5
POPULATION = 400
P_CROSSOVER = 0.2
P_MUTATION = 0.05
G_MAX = 200
STALL_GENERATIONS = 30
RESTARTS = 4
RESTART_BELOW = 0.5
DELTA_D = 15.0
DELTA_O = 20.0
THETA_RANGE: Tuple[float, float] = (0.0, 359.0)
SCALE_RANGE: Tuple[float, float] = (0.8, 1.2)
T_RANGE: Tuple[float, float] = (-400.0, 400.0)
SUBSET_SIZE = 50
TRIALS = 10
CMC_CHECKPOINTS: Tuple[float, ...] = (1.0,) + tuple(float(p) for p in range(5, 101, 5))
SEED = 0

OMP_TOL = 1e-10
PEAK_FLOOR = 1e-9

FormatType = Literal["json", "yaml", "csv", "rich", "tabulate"]


class MinutiaType(str, Enum):
    ending = "E"
    bifurcation = "B"
    unknown = "U"

    def compatible(self, other: "MinutiaType") -> bool:
        if MinutiaType.unknown in (self, other):
            return True
        return self is other


class CodingMode(str, Enum):
    omp = "omp"
    lasso = "lasso"


class EvalMode(str, Enum):
    exclude = "exclude"
    zero = "zero"


class TiePolicy(str, Enum):
    id = "id"
    optimistic = "optimistic"
    pessimistic = "pessimistic"


class Scenario(str, Enum):
    roi = "roi"
    whole = "whole"


class Category(str, Enum):
    good = "good"
    bad = "bad"
    ugly = "ugly"


# section name in config.yaml -> what it configures (for `show config`)
CONFIG_SECTIONS = {
    "imagecore": "patch grid",
    "dictlearn": "online dictionary learning",
    "atomid": "ridge-valley atom identification",
    "segmentation": "vote map morphology / hull",
    "extractor": "baseline minutiae extractor",
    "ga": "genetic-algorithm matcher",
    "identify": "gallery trial plan",
    "evaluate": "GMPR/FMAR tolerances",
}
