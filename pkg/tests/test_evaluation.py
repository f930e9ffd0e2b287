import json

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import naive_metrics
from dcsl.errors import DegenerateSampleError, RejectedInputError
from dcsl.evaluation import REPORT_KEYS, confusion, metrics, paired_ttest, t_sf_two_sided


def t_two_sided_quadrature(t, df):
    """P(|T| >= |t|) by integrating the Student-t density."""
    mpmath.mp.dps = 30
    df = mpmath.mpf(df)
    c = mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2))
    dens = lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2)
    return float(2 * mpmath.quad(dens, [abs(t), mpmath.inf]))


def test_confusion_diagonal():
    y = np.repeat([0, 1, 2], 5)
    np.testing.assert_array_equal(confusion(y, y, 3), np.diag([5, 5, 5]))


def test_confusion_empty_and_order_invariance():
    assert np.all(confusion([], [], 3) == 0)
    rng = np.random.default_rng(0)
    y, p = rng.integers(0, 3, 40), rng.integers(0, 3, 40)
    perm = rng.permutation(40)
    np.testing.assert_array_equal(confusion(p, y, 3), confusion(p[perm], y[perm], 3))


def test_confusion_length_mismatch():
    with pytest.raises(RejectedInputError):
        confusion([0, 1], [0], 2)


def test_metrics_perfect():
    r = metrics(np.diag([5, 5, 5]))
    for v in (r.accuracy, r.precision_macro, r.sensitivity_macro, r.f1_macro):
        assert v == 1.0
    assert not r.warnings


def test_metrics_worked_example():
    r = metrics(np.array([[8, 2, 0], [0, 10, 0], [0, 0, 10]]))
    assert r.accuracy == pytest.approx(28 / 30, abs=1e-15)
    assert r.sensitivity_per_class[0] == pytest.approx(0.8, abs=1e-15)
    assert r.precision_per_class[1] == pytest.approx(10 / 12, abs=1e-15)


def test_metrics_empty_rejected_and_undefined_flagged():
    with pytest.raises(RejectedInputError):
        metrics(np.zeros((3, 3), dtype=int))
    r = metrics(np.array([[3, 0], [2, 0]]))
    assert r.precision_per_class[1] == 0.0
    assert r.warnings


def test_metrics_match_definitions():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        cm = rng.integers(0, 20, size=(n, n))
        if cm.sum() == 0:
            continue
        r = metrics(cm)
        acc, prec, sens, f1 = naive_metrics(cm)
        assert r.accuracy == pytest.approx(acc, abs=1e-12)
        np.testing.assert_allclose(r.precision_per_class, prec, atol=1e-12)
        np.testing.assert_allclose(r.sensitivity_per_class, sens, atol=1e-12)
        np.testing.assert_allclose(r.f1_per_class, f1, atol=1e-12)
        assert r.f1_macro == pytest.approx(np.mean(f1), abs=1e-12)


@given(arrays(np.int64, (3, 3), elements=st.integers(0, 30)), st.permutations(range(3)))
def test_macro_invariant_to_relabeling(cm, perm):
    if cm.sum() == 0:
        return
    perm = list(perm)
    a = metrics(cm)
    b = metrics(cm[np.ix_(perm, perm)])
    for k in ("accuracy", "precision_macro", "sensitivity_macro", "f1_macro"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), abs=1e-12)


@given(arrays(np.int64, (4, 4), elements=st.integers(0, 50)))
def test_accuracy_is_support_weighted_sensitivity(cm):
    if cm.sum() == 0:
        return
    r = metrics(cm)
    assert abs(r.accuracy - r.sensitivity_weighted) < 1e-12
    assert all(0.0 <= v <= 1.0 for v in (r.accuracy, r.precision_macro, r.sensitivity_macro, r.f1_macro))


def test_report_json_schema():
    d = metrics(np.array([[8, 2, 0], [0, 10, 0], [1, 0, 9]])).to_dict()
    for k in REPORT_KEYS:
        assert k in d
    back = json.loads(json.dumps(d))
    assert back["confusion"] == [[8, 2, 0], [0, 10, 0], [1, 0, 9]]
    assert len(back["sensitivity_per_class"]) == 3


def test_ttest_worked_example():
    d = np.array([0.05, 0.04, 0.05, 0.05, 0.06])
    t, p, df = paired_ttest(d, np.zeros(5))
    assert t == pytest.approx(15.8114, abs=1e-4)
    assert df == 4
    assert p < 0.001
    assert p == pytest.approx(t_two_sided_quadrature(t, 4), rel=1e-9)


def test_ttest_zero_mean_differences():
    t, p, df = paired_ttest([1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 4.0, 3.0])
    assert t == 0.0 and p == pytest.approx(1.0, abs=1e-15)


def test_ttest_degenerate():
    with pytest.raises(DegenerateSampleError):
        paired_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(RejectedInputError):
        paired_ttest([1.0], [2.0])


def test_ttest_sign_symmetry():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=7), rng.normal(size=7)
    t1, p1, _ = paired_ttest(a, b)
    t2, p2, _ = paired_ttest(b, a)
    assert t2 == -t1 and p2 == pytest.approx(p1, rel=1e-14)


@pytest.mark.parametrize("df", [1, 2, 4, 9, 49])
def test_t_tail_against_quadrature(df):
    for t in (0.1, 0.9, 2.0, 3.5, 8.0):
        assert t_sf_two_sided(t, df) == pytest.approx(t_two_sided_quadrature(t, df), rel=1e-8)


@pytest.mark.parametrize("df", [1, 4, 49])
def test_p_monotone_in_t(df):
    grid = np.linspace(0, 20, 201)
    p = [t_sf_two_sided(t, df) for t in grid]
    assert all(b < a for a, b in zip(p, p[1:]))
