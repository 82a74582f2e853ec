"""Every numeric default in one place, printed by ``infertra --show-config``."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, fields

from . import nmm
from .inference import RwrConfig

LOG_ENV = "INFERTRA_LOG"

LEARNING = {
    "order": nmm.DEFAULT_ORDER,
    "delta": nmm.DEFAULT_DELTA,
    "epsilon": nmm.DEFAULT_EPSILON,
    "stride": nmm.DEFAULT_STRIDE,
    "n_bins": None,
    "speed_bins": nmm.DEFAULT_SPEED_BINS,
    "default_speed": nmm.DEFAULT_SPEED,
    "max_bins": nmm.MAX_BINS,
}

EVALUATION = {
    "folds": 10,
    "si": [900],
    "baselines": ["SP", "STP", "MLT"],
    "order_margin": 0.01,
    "path_hop_factor": 2.5,
}


def defaults() -> dict:
    return {"learning": dict(LEARNING), "inference": asdict(RwrConfig()), "evaluation": dict(EVALUATION)}


def rwr_fields():
    return [f.name for f in fields(RwrConfig)]


def setup_logging(default="WARNING"):
    level = os.environ.get(LOG_ENV, default).upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
