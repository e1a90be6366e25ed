"""Embedding-oriented bindings over the hsup engine.

Training loops and serving stacks that do not want to shell out to the CLI
use this layer: a configured reward engine with batch scoring, array-or-file
correspondence loss, and bundle loading.  Everything here delegates to the
public hsup API; no private internals are touched, so scores are identical
to the CLI's.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import json
import os

import numpy as np

from hsup import (
    CorrespondenceConfig,
    GroundTruth,
    RewardConfig,
    correspondence_loss as _core_loss,
    read_matrix,
    score_output,
)
from hsup.correspondence import CorrespondenceMatrix, LossReport
from hsup.dataset import SupervisionBundle, read_bundle
from hsup.rewards import GroundTruthError

__all__ = [
    "RewardEngine",
    "correspondence_loss",
    "read_bundle",
    "SupervisionBundle",
    "LossReport",
]

__version__ = "0.1.0"


class RewardEngine:
    """Reusable scorer bound to one reward configuration.

    ``score`` takes raw model text plus a ground-truth mapping and returns the
    flat record the CLI emits per line; ``batch_score`` preserves input order
    and maps per-record failures to zero scores with an ``error`` field
    instead of raising.
    """

    def __init__(self, config: RewardConfig = None):
        self._config = config if config is not None else RewardConfig()

    @property
    def config(self) -> RewardConfig:
        return self._config

    def score(self, raw_output: str, ground_truth) -> dict:
        if not isinstance(ground_truth, GroundTruth):
            ground_truth = GroundTruth.from_mapping(dict(ground_truth))
        return score_output(str(raw_output), ground_truth, self._config).as_record()

    def score_record(self, record: dict) -> dict:
        """Score one CLI-shaped record {id, raw_output, ground_truth}."""
        try:
            if not isinstance(record, dict):
                raise ValueError("record must be a mapping")
            gt_raw = record.get("ground_truth")
            if gt_raw is None:
                raise ValueError("record has no ground truth")
            result = self.score(record.get("raw_output", ""), gt_raw)
            return {"id": record.get("id"), **result}
        except (ValueError, GroundTruthError, KeyError, TypeError) as exc:
            return {
                "id": record.get("id") if isinstance(record, dict) else None,
                "act_acc": 0.0,
                "ans_acc": 0.0,
                "format": 0.0,
                "total": 0.0,
                "error": str(exc),
            }

    def batch_score(self, records, jobs: int = 1) -> list:
        records = list(records)
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(self.score_record, records))
        return [self.score_record(record) for record in records]


def correspondence_loss(
    matrix,
    features_x,
    features_y,
    config: CorrespondenceConfig = None,
) -> LossReport:
    """Bidirectional patch-alignment loss from an array, matrix, or file path.

    ``matrix`` may be a CorrespondenceMatrix, a square (n^2, n^2) array, or a
    path to a stored ``.hsup`` file.  Feature arrays must be (n^2, dim).
    """
    config = config if config is not None else CorrespondenceConfig()
    if isinstance(matrix, (str, os.PathLike)):
        matrix = read_matrix(matrix)
    elif not isinstance(matrix, CorrespondenceMatrix):
        entries = np.asarray(matrix, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"correspondence matrix must be square 2-D, got shape {entries.shape}")
        matrix = CorrespondenceMatrix(entries)
    fx = np.asarray(features_x, dtype=np.float64)
    fy = np.asarray(features_y, dtype=np.float64)
    for name, feats in (("features_x", fx), ("features_y", fy)):
        if feats.ndim != 2:
            raise ValueError(f"{name} must be 2-D (patches, dim), got shape {feats.shape}")
        if feats.shape[0] != matrix.entries.shape[0]:
            raise ValueError(
                f"{name} has {feats.shape[0]} rows but the matrix expects "
                f"{matrix.entries.shape[0]} patches"
            )
    return _core_loss(matrix, fx, fy, config)
