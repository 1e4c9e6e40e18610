import csv
import io

import numpy as np
import pytest

from liveness.attacknet import ModelConfig, encode_weights, init_weights
from liveness.crossdb import (
    MATRIX_COLUMNS, WITHIN, CrossDbMatrix, MatrixCell, bonafide_scores, derive_seed,
    parse_matrix_json, render_matrix, run_cross_matrix,
)
from liveness.data_io import SynthSpec, generate_synthetic, split_dataset
from liveness.errors import InputError, NumericError
from liveness.metrics import ErrorRates, error_rates
from liveness.training import TrainConfig, train_model

CFG = TrainConfig(epochs=1, batch_size=16, seed=4)


def _synth(name, seed, period=4, size=16):
    return generate_synthetic(SynthSpec(per_class=12, height=size, width=size, seed=seed,
                                        stripe_period=period), name=name)


@pytest.fixture(scope="module")
def trio():
    return [_synth("a", 1), _synth("b", 2), _synth("c", 3, period=16)]


@pytest.fixture(scope="module")
def matrix_run(trio):
    return run_cross_matrix(trio, train_config=CFG, include_diagonal=True)


def test_cell_counts(matrix_run, trio):
    matrix, models = matrix_run
    assert len(matrix.cells) == 3 * 2 + 3
    assert set(models) == {"a", "b", "c"}
    off = [c for c in matrix.rows() if c.trained_on != c.tested_on]
    assert len(off) == 6
    assert all(c.regime == WITHIN for c in matrix.rows() if c.trained_on == c.tested_on)


def test_every_cell_obeys_hter_identity(matrix_run):
    for cell in matrix_run[0].rows():
        assert cell.rates.hter == (cell.rates.far + cell.rates.frr) / 2


def test_off_diagonal_cells_match_standalone_runs(matrix_run, trio):
    matrix, models = matrix_run
    seed = derive_seed(CFG.seed, 1)
    own = TrainConfig(**{**vars(CFG), "seed": seed})
    weights, _ = train_model(init_weights(ModelConfig(input_height=16, input_width=16), seed),
                             trio[1], None, own)
    assert encode_weights(weights) == encode_weights(models["b"])
    expected = error_rates(bonafide_scores(weights, trio[2]), trio[2].labels)
    assert matrix.cells[("b", "c")].rates == expected


def test_diagonal_matches_standalone_split_run(matrix_run, trio):
    seed = derive_seed(CFG.seed, 0)
    train_part, held = split_dataset(trio[0], 0.2, seed)
    own = TrainConfig(**{**vars(CFG), "seed": seed})
    weights, _ = train_model(init_weights(ModelConfig(input_height=16, input_width=16), seed),
                             train_part, None, own)
    expected = error_rates(bonafide_scores(weights, held), held.labels)
    assert matrix_run[0].cells[("a", "a")].rates == expected


def test_deterministic(trio, matrix_run):
    again, _ = run_cross_matrix(trio, train_config=CFG, include_diagonal=True)
    assert render_matrix(again, "json") == render_matrix(matrix_run[0], "json")


def test_derived_seeds_stable_when_appending():
    assert [derive_seed(5, i) for i in range(3)] == [derive_seed(5, i) for i in range(4)][:3]
    assert len({derive_seed(5, i) for i in range(20)}) == 20


def test_five_datasets_make_twenty_cells():
    sets = [_synth(f"d{i}", i, size=8) for i in range(5)]
    matrix, _ = run_cross_matrix(sets, train_config=TrainConfig(epochs=0))
    assert len(matrix.cells) == 20


def test_input_errors(trio):
    with pytest.raises(InputError):
        run_cross_matrix(trio[:1], train_config=CFG)
    with pytest.raises(InputError):
        run_cross_matrix([trio[0], _synth("big", 9, size=32)], train_config=CFG)
    with pytest.raises(InputError):
        run_cross_matrix([trio[0], trio[0]], train_config=CFG)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_names_the_dataset(trio):
    with pytest.raises(NumericError, match=r"dataset 0 \('a'\)"):
        run_cross_matrix(trio, train_config=TrainConfig(epochs=2, learning_rate=1e300))


def _two_cell_matrix():
    m = CrossDbMatrix(["x", "y"])
    m.cells[("y", "x")] = MatrixCell("y", "x", ErrorRates(0.25, 0.5, 0.375, 0.5))
    m.cells[("x", "y")] = MatrixCell("x", "y", ErrorRates(1 / 3, 0.0, 1 / 6, 0.5))
    return m


def test_render_csv_and_md():
    m = _two_cell_matrix()
    rows = list(csv.reader(io.StringIO(render_matrix(m, "csv"))))
    assert tuple(rows[0]) == MATRIX_COLUMNS
    assert rows[1] == ["x", "y", "0.333", "0.000", "0.167"]
    assert rows[2][:2] == ["y", "x"]
    for r in rows[1:]:
        far, frr, h = map(float, r[2:])
        assert abs(h - (far + frr) / 2) <= 0.001
    md = render_matrix(m, "md").splitlines()
    assert md[0] == "| Trained on | Tested on | FAR | FRR | HTER |" and len(md) == 4


def test_json_round_trip_is_byte_identical(matrix_run):
    for m in (_two_cell_matrix(), matrix_run[0]):
        text = render_matrix(m, "json")
        assert render_matrix(parse_matrix_json(text), "json") == text
    back = parse_matrix_json(render_matrix(_two_cell_matrix(), "json"))
    assert back.cells[("x", "y")].rates.far == 1 / 3
