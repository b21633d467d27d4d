import io

import pytest

from gnm.errors import DataError
from gnm.linalg import Matrix
from gnm.metrics import EvalReport, accuracy, argmax_columns, macro_f1, mse, r2


def test_accuracy_perfect():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0


def test_accuracy_two_thirds():
    assert accuracy([0, 1, 1], [0, 1, 2]) == pytest.approx(2 / 3)


def test_accuracy_order_sensitivity():
    # pointwise comparison, not multiset overlap
    assert accuracy([0, 1], [1, 0]) == 0.0


def test_accuracy_rejects_mismatch():
    with pytest.raises(DataError):
        accuracy([0], [0, 1])
    with pytest.raises(DataError):
        accuracy([], [])


def test_macro_f1_perfect():
    assert macro_f1([0, 1, 2, 1], [0, 1, 2, 1], 3) == 1.0


def test_macro_f1_binary_hand_value():
    # class 0: tp=1 fp=1 fn=1 -> 0.5; class 1 symmetric -> 0.5
    assert macro_f1([1, 1, 0, 0], [1, 0, 1, 0], 2) == 0.5


def test_macro_f1_absent_class_skipped():
    # class 2 never occurs, so the mean runs over two classes only
    perfect_two = macro_f1([0, 1, 0], [0, 1, 0], 3)
    assert perfect_two == 1.0


def test_macro_f1_missed_class_counts_as_zero():
    # class 1 exists in truth but is never predicted: f1 = 0 enters the mean
    val = macro_f1([0, 0, 0, 0], [0, 0, 0, 1], 2)
    # class 0: tp=3 fp=1 fn=0 -> 6/7; class 1: 0
    assert val == pytest.approx((6 / 7) / 2)


def test_macro_f1_rejects_out_of_range():
    with pytest.raises(DataError):
        macro_f1([0, 2], [0, 1], 2)


def test_mse_basic():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([1.0, 3.0], [2.0, 6.0]) == 5.0


def test_r2_perfect():
    assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_r2_mean_predictor_is_zero():
    truth = [1.0, 2.0, 3.0]
    assert r2([2.0, 2.0, 2.0], truth) == 0.0


def test_r2_bad_model_goes_negative():
    assert r2([1.0, 2.0, 5.0], [1.0, 2.0, 3.0]) == -1.0


def test_r2_constant_truth_rejected():
    with pytest.raises(DataError):
        r2([1.0, 2.0], [3.0, 3.0])


def test_argmax_columns():
    out = Matrix.from_rows([[0.1, 5.0, -1.0], [0.2, 4.0, -0.5]])
    # rows are classes, columns samples: (0.1, 0.2), (5.0, 4.0), (-1.0, -0.5)
    assert argmax_columns(out) == [1, 0, 1]


def test_argmax_ties_take_first():
    out = Matrix.from_rows([[1.0], [1.0]])
    assert argmax_columns(out) == [0]


def test_report_aggregation():
    folds = [{"accuracy": 1.0, "macro_f1": 1.0},
             {"accuracy": 0.9, "macro_f1": 0.8}]
    rep = EvalReport("classification", folds)
    assert rep.mean("accuracy") == pytest.approx(0.95)
    assert rep.std("accuracy") == pytest.approx(0.05)
    assert rep.metric_names == ("accuracy", "macro_f1")


def test_report_render_percent_format():
    folds = [{"accuracy": 0.995, "macro_f1": 0.99},
             {"accuracy": 1.0, "macro_f1": 1.0}]
    text = EvalReport("classification", folds).render(label="gnm")
    lines = text.splitlines()
    assert "accuracy" in lines[0] and "macro_f1" in lines[0]
    assert lines[1].startswith("gnm")
    assert "99.75 +- 0.25" in lines[1]


def test_report_regression_units():
    folds = [{"mse": 0.25, "r2": 0.5}, {"mse": 0.35, "r2": 0.7}]
    rep = EvalReport("regression", folds)
    text = rep.render()
    assert "0.30 +- 0.05" in text  # raw units, not percent
    assert rep.metric_names == ("mse", "r2")


def test_report_csv_layout():
    folds = [{"accuracy": 1.0, "macro_f1": 1.0},
             {"accuracy": 0.5, "macro_f1": 0.5}]
    buf = io.StringIO()
    EvalReport("classification", folds).to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "fold,accuracy,macro_f1"
    assert lines[1] == "0,1.0,1.0"
    assert lines[-2].startswith("mean,0.75")
    assert lines[-1].startswith("std,0.25")
