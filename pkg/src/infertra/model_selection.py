"""Choosing the model order on held-out data."""

from __future__ import annotations

import logging
import random
from dataclasses import replace

import numpy as np

from .evaluation import f_score, precision_recall
from .inference import RwrConfig, UnreachableError, infer
from .nmm import NetworkMobilityModel
from .trajectory import downsample

log = logging.getLogger(__name__)


def validation_split(db, fraction=0.2, seed=0):
    """Seeded ``(train, held_out)`` split."""
    db = list(db)
    n_val = int(round(len(db) * fraction))
    if n_val < 1 or n_val >= len(db):
        raise ValueError(f"{len(db)} trajectories are too few for a validation split of {fraction}")
    order = list(range(len(db)))
    random.Random(seed).shuffle(order)
    held = set(order[:n_val])
    return [t for i, t in enumerate(db) if i not in held], [t for i, t in enumerate(db) if i in held]


def held_out_score(net, train, held_out, order, si, cfg=None, **model_params) -> float:
    """Mean F-score on ``held_out`` of a model of ``order`` learned from ``train``.

    An observation the model cannot connect scores 0.
    """
    cfg = cfg or RwrConfig()
    model = NetworkMobilityModel(net, order=order, **model_params).fit(train)
    scores = []
    for k, truth in enumerate(held_out):
        try:
            u = infer(model, downsample(truth, si), replace(cfg, seed=cfg.seed + k))
        except UnreachableError:
            scores.append(0.0)
            continue
        scores.append(f_score(*precision_recall(truth, u)))
    return float(np.mean(scores))


def select_order(net, db, candidates=(1, 2, 3), si=900, fraction=0.2, margin=0.01, seed=0, cfg=None,
                 max_validation=None, return_scores=False, **model_params):
    """Smallest candidate order whose held-out F-score is within ``margin`` of the best.

    Each candidate is learned on the same seeded training split and scored
    on the same held-out trajectories downsampled at ``si``.
    """
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ValueError("no candidate orders")
    if len(candidates) == 1:
        return (candidates[0], {}) if return_scores else candidates[0]
    train, held = validation_split(db, fraction, seed)
    if max_validation is not None:
        held = held[:max_validation]
    cfg = cfg or RwrConfig(seed=seed)
    scores = {m: held_out_score(net, train, held, m, si, cfg, **model_params) for m in candidates}
    log.info("held-out F by order: %s", scores)
    best = max(scores.values())
    chosen = min(m for m, s in scores.items() if s >= best - margin)
    return (chosen, scores) if return_scores else chosen
