import numpy as np
import pytest

from consol.equations import canonicalize, term
from consol.errors import DegenerateError
from consol.metrics import MetricReport, e_c, nrmse, percentage_error


def test_nrmse_vector_oracle():
    pred = np.array([1.0, 2.0, 3.0])
    truth = np.array([1.0, 2.0, 4.0])
    # rmse = sqrt(1/3), sigma = 2
    assert nrmse(pred, truth, 2.0) == pytest.approx(np.sqrt(1 / 3) / 2)


def test_nrmse_matrix_averages_per_output():
    pred = np.array([[1.0, 0.0], [3.0, 0.0]])
    truth = np.array([[2.0, 2.0], [4.0, 2.0]])
    val = nrmse(pred, truth, np.array([1.0, 4.0]))
    assert val == pytest.approx((1.0 / 1.0 + 2.0 / 4.0) / 2)


def test_nrmse_zero_for_exact():
    y = np.random.default_rng(0).normal(size=(20, 3))
    assert nrmse(y, y, y.std(axis=0)) == 0.0


def test_nrmse_rejects_zero_sigma():
    with pytest.raises(DegenerateError):
        nrmse(np.ones(3), np.ones(3), 0.0)


def test_nrmse_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        nrmse(np.ones(3), np.ones(4), 1.0)


def test_percentage_error_caps_at_100():
    assert percentage_error(1.0, 1.1) == pytest.approx(10.0)
    assert percentage_error(1.0, 5.0) == 100.0
    assert percentage_error(2.0, 2.0) == 0.0


TRUE_EQ = canonicalize([
    [term(3.0, [(0, "square", None), (1, "cos", 2.5)])],
    [term(4.0, [(0, "id", None), (2, "id", None)])],
])


def test_e_c_zero_for_exact_recovery():
    score, matches = e_c(TRUE_EQ, TRUE_EQ)
    assert score == 0.0
    assert all(m.pes == [0.0] * len(m.pes) for m in matches)


def test_e_c_counts_coefficient_and_inner_slots():
    learned = canonicalize([
        [term(3.3, [(0, "square", None), (1, "cos", 2.0)])],
        [term(4.0, [(0, "id", None), (2, "id", None)])],
    ])
    score, _ = e_c(TRUE_EQ, learned)
    # slots: y1 coeff 10%, y1 inner 20%, y2 coeff 0%
    assert score == pytest.approx((10.0 + 20.0 + 0.0) / 3)


def test_e_c_unmatched_true_term_scores_100():
    learned = canonicalize([
        [term(3.0, [(0, "square", None), (1, "cos", 2.5)])],
        [term(4.0, [(1, "id", None), (2, "id", None)])],  # wrong input
    ])
    score, matches = e_c(TRUE_EQ, learned)
    assert score == pytest.approx((0.0 + 0.0 + 100.0) / 3)
    missing = [m for m in matches if m.learned_term is None]
    assert len(missing) == 1 and missing[0].output == 1


def test_e_c_learned_only_terms_reported_not_averaged():
    learned = canonicalize([
        [term(3.0, [(0, "square", None), (1, "cos", 2.5)]),
         term(0.5, [(2, "id", None)])],
        [term(4.0, [(0, "id", None), (2, "id", None)])],
    ])
    score, matches = e_c(TRUE_EQ, learned)
    assert score == 0.0
    extras = [m for m in matches if m.true_term is None]
    assert len(extras) == 1


def test_e_c_picks_best_candidate_among_equal_signatures():
    learned = canonicalize([
        [term(2.0, [(0, "square", None), (1, "cos", 5.0)]),
         term(3.01, [(0, "square", None), (1, "cos", 2.51)])],
        [term(4.0, [(0, "id", None), (2, "id", None)])],
    ])
    score, _ = e_c(TRUE_EQ, learned)
    assert score < 1.0


def test_e_c_rejects_output_count_mismatch():
    other = canonicalize([[term(1.0, [(0, "id", None)])]])
    with pytest.raises(ValueError):
        e_c(TRUE_EQ, other)


def test_metric_report_json():
    rep = MetricReport(0.1, 0.2, 1.5)
    obj = rep.to_json_obj()
    assert obj["nrmse_train"] == 0.1 and obj["e_c_percent"] == 1.5
