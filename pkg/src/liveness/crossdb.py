"""Cross-database protocol: train on each dataset, test on every other one.

Cells are keyed by ``(trained_on, tested_on)``. Off-diagonal cells train
on the full source dataset. Diagonal cells (optional) train on a
stratified split of the source and test on its held-out part; their
``regime`` field says so.
"""

import csv
import io
import json
import zlib
from dataclasses import dataclass, field

from .attacknet import ModelConfig, init_weights, predict_proba
from .data_io import BONAFIDE, split_dataset
from .errors import InputError, LivenessError
from .metrics import ErrorRates, error_rates, fmt3
from .training import TrainConfig, train_model

CROSS = "cross"
WITHIN = "within"
DIAGONAL_HOLDOUT = 0.2
MATRIX_COLUMNS = ("Trained on", "Tested on", "FAR", "FRR", "HTER")


@dataclass(frozen=True)
class MatrixCell:
    trained_on: str
    tested_on: str
    rates: ErrorRates
    regime: str = CROSS


@dataclass
class CrossDbMatrix:
    datasets: list
    cells: dict = field(default_factory=dict)

    def rows(self):
        """Cells in dataset-list order of (trained_on, tested_on)."""
        return [self.cells[(a, b)] for a in self.datasets for b in self.datasets
                if (a, b) in self.cells]

    def to_dict(self):
        return {
            "datasets": list(self.datasets),
            "cells": [
                {"trained_on": c.trained_on, "tested_on": c.tested_on, "regime": c.regime,
                 "far": c.rates.far, "frr": c.rates.frr, "hter": c.rates.hter,
                 "threshold": c.rates.decision_threshold}
                for c in self.rows()
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        matrix = cls(list(payload["datasets"]))
        for c in payload["cells"]:
            rates = ErrorRates(c["far"], c["frr"], c["hter"], c["threshold"])
            matrix.cells[(c["trained_on"], c["tested_on"])] = MatrixCell(
                c["trained_on"], c["tested_on"], rates, c["regime"])
        return matrix


def derive_seed(seed, index):
    """Per-dataset seed; depends only on (seed, index) so appending datasets is harmless."""
    return (int(seed) ^ zlib.crc32(f"dataset-{index}".encode())) & 0xFFFFFFFFFFFFFFFF


def bonafide_scores(weights, dataset):
    return predict_proba(weights, dataset.samples)[:, BONAFIDE]


def _train_and_eval(i, datasets, model_config, train_config, include_diagonal, threshold):
    source = datasets[i]
    seed = derive_seed(train_config.seed, i)
    cfg = TrainConfig(**{**vars(train_config), "seed": seed})
    cells = {}
    try:
        weights, _ = train_model(init_weights(model_config, seed), source, None, cfg)
        for j, target in enumerate(datasets):
            if j == i:
                continue
            rates = error_rates(bonafide_scores(weights, target), target.labels, threshold)
            cells[(source.name, target.name)] = MatrixCell(source.name, target.name, rates)
        if include_diagonal:
            train_part, held = split_dataset(source, DIAGONAL_HOLDOUT, seed)
            own, _ = train_model(init_weights(model_config, seed), train_part, None, cfg)
            rates = error_rates(bonafide_scores(own, held), held.labels, threshold)
            cells[(source.name, source.name)] = MatrixCell(source.name, source.name, rates, WITHIN)
    except LivenessError as exc:
        exc.args = (f"while training on dataset {i} ({source.name!r}): {exc}",)
        raise
    return weights, cells


def run_cross_matrix(datasets, model_config=None, train_config=TrainConfig(),
                     include_diagonal=False, threshold=0.5):
    """Returns ``(matrix, {trained_on: weights})``."""
    datasets = list(datasets)
    if len(datasets) < 2:
        raise InputError("cross-database evaluation needs at least 2 datasets")
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise InputError(f"dataset names must be unique, got {names}")
    shapes = {tuple(d.image_shape) for d in datasets}
    if len(shapes) != 1:
        raise InputError(f"datasets disagree on image shape: {sorted(shapes)}")
    h, w, c = shapes.pop()
    if model_config is None:
        model_config = ModelConfig(input_height=h, input_width=w, input_channels=c)
    elif (model_config.input_height, model_config.input_width, model_config.input_channels) != (h, w, c):
        raise InputError(f"datasets are {h}x{w}x{c} but the model config expects "
                         f"{model_config.input_height}x{model_config.input_width}"
                         f"x{model_config.input_channels}")

    matrix = CrossDbMatrix(names)
    models = {}
    for i in range(len(datasets)):
        weights, cells = _train_and_eval(i, datasets, model_config, train_config,
                                         include_diagonal, threshold)
        models[names[i]] = weights
        matrix.cells.update(cells)
    return matrix, models


def render_matrix(matrix, fmt="csv"):
    if fmt == "json":
        return json.dumps(matrix.to_dict(), indent=2) + "\n"
    rows = [[c.trained_on, c.tested_on, fmt3(c.rates.far), fmt3(c.rates.frr), fmt3(c.rates.hter)]
            for c in matrix.rows()]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MATRIX_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(MATRIX_COLUMNS) + " |", "|" + "---|" * len(MATRIX_COLUMNS)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown matrix format {fmt!r}")


def parse_matrix_json(text):
    return CrossDbMatrix.from_dict(json.loads(text))
