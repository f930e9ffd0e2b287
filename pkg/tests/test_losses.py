import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import central_diff, rel_error
from dcsl.costs import LossCostMatrix, ScoreCostMatrix, default_clinical_matrix
from dcsl.errors import RejectedInputError
from dcsl.losses import (
    DEFAULT_LAMBDA_C,
    LabeledBatch,
    center_loss,
    conditional_center_loss,
    cost_weighted_ce,
    dcsl_loss,
    softmax,
    softmax_ce,
)

finite = st.floats(-50, 50, allow_nan=False)


def random_batch(rng, m=5, n=3, d=2):
    return LabeledBatch(rng.normal(size=(m, d)), rng.normal(size=(m, n)), rng.integers(0, n, size=m))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), rtol=0, atol=1e-15)


def test_softmax_large_logit_matches_high_precision():
    p = softmax(np.array([1000.0, 0.0, 0.0]))
    mpmath.mp.dps = 50
    den = mpmath.e ** 1000 + 2
    ref = [mpmath.e ** 1000 / den, 1 / den, 1 / den]
    for got, want in zip(p, ref):
        assert got == pytest.approx(float(want), rel=1e-12, abs=1e-300)
    assert np.all(np.isfinite(p))


def test_softmax_rejects_nonfinite():
    with pytest.raises(RejectedInputError):
        softmax(np.array([np.inf, 0.0]))


@given(arrays(np.float64, 4, elements=finite), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)
    assert softmax(z).sum() == pytest.approx(1.0, abs=1e-12)


@given(arrays(np.float64, (3, 4), elements=finite), st.floats(-100, 100))
def test_softmax_ce_shift_invariant(z, c):
    y = np.array([0, 3, 1])
    l0, g0 = softmax_ce(LabeledBatch(np.zeros((3, 2)), z, y))
    l1, g1 = softmax_ce(LabeledBatch(np.zeros((3, 2)), z + c, y))
    assert l1 == pytest.approx(l0, abs=1e-9)
    np.testing.assert_allclose(g1, g0, atol=1e-12)


def test_softmax_ce_zero_logits_is_log_n():
    b = LabeledBatch(np.zeros((4, 2)), np.zeros((4, 3)), np.array([0, 1, 2, 1]))
    loss, _ = softmax_ce(b)
    assert loss == pytest.approx(np.log(3), abs=1e-12)
    assert loss == pytest.approx(1.098612, abs=1e-6)


def test_softmax_ce_confident_limit():
    b = LabeledBatch(np.zeros((2, 2)), np.array([[200.0, 0, 0], [0, 0, 200.0]]), np.array([0, 2]))
    loss, grad = softmax_ce(b)
    assert loss < 1e-80
    assert np.abs(grad).max() < 1e-80


def test_softmax_ce_unit_weights_bitwise():
    b = random_batch(np.random.default_rng(3))
    l0, g0 = softmax_ce(b)
    l1, g1 = softmax_ce(b, np.ones(3))
    assert l0 == l1
    assert np.array_equal(g0, g1)


def test_weighted_ce_definition():
    rng = np.random.default_rng(4)
    b = random_batch(rng, m=6)
    w = np.array([0.2, 1.5, 0.7])
    loss, _ = softmax_ce(b, w)
    p = softmax(b.logits)
    want = -np.mean([w[y] * np.log(p[i, y]) for i, y in enumerate(b.labels)])
    assert loss == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_softmax_ce_gradient(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, m=4, n=4)
    w = rng.uniform(0.1, 2.0, size=4)
    _, g = softmax_ce(b, w)
    z = b.logits.copy()
    num = central_diff(lambda: softmax_ce(LabeledBatch(b.features, z, b.labels), w)[0], [z])
    assert rel_error([g], num) < 1e-5


def test_center_loss_zero_at_centers():
    c = np.array([[1.0, 2.0], [-1.0, 0.5]])
    y = np.array([0, 1, 1])
    b = LabeledBatch(c[y], np.zeros((3, 2)), y)
    loss, g = center_loss(b, c)
    assert loss == 0.0 and np.all(g == 0.0)


def test_center_loss_worked_example():
    b = LabeledBatch(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2)), np.array([0, 1]))
    loss, g = center_loss(b, np.array([[0.0, 0.0], [0.0, 1.0]]))
    assert loss == 0.5
    np.testing.assert_array_equal(g, [[1.0, 0.0], [0.0, 0.0]])


def test_center_loss_rejects_wrong_center_shape():
    b = random_batch(np.random.default_rng(0))
    with pytest.raises(RejectedInputError):
        center_loss(b, np.zeros((2, 2)))


@pytest.mark.parametrize("seed", range(30))
def test_center_losses_gradient(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, m=5, n=3, d=3)
    c = rng.normal(size=(3, 3))
    w = rng.uniform(0.1, 2.0, size=3)
    x = b.features.copy()
    for fn, args in ((center_loss, ()), (conditional_center_loss, (w,))):
        _, g = fn(b, c, *args)
        num = central_diff(lambda: fn(LabeledBatch(x, b.logits, b.labels), c, *args)[0], [x])
        assert rel_error([g], num) < 1e-5


def test_ccl_unit_weights_bitwise_equals_center_loss():
    rng = np.random.default_rng(5)
    b = random_batch(rng)
    c = rng.normal(size=(3, 2))
    l0, g0 = center_loss(b, c)
    l1, g1 = conditional_center_loss(b, c, np.ones(3))
    assert l0 == l1 and np.array_equal(g0, g1)


def test_ccl_single_example():
    b = LabeledBatch(np.array([[2.0, 0.0]]), np.zeros((1, 2)), np.array([1]))
    loss, g = conditional_center_loss(b, np.zeros((2, 2)), np.array([1.0, 0.5]))
    assert loss == 2.0
    np.testing.assert_array_equal(g, [[2.0, 0.0]])


def test_ccl_rejects_nonpositive_weight():
    b = random_batch(np.random.default_rng(0))
    with pytest.raises(RejectedInputError):
        conditional_center_loss(b, np.zeros((3, 2)), np.array([1.0, 0.0, 1.0]))


def test_center_gradient_points_away_from_center():
    rng = np.random.default_rng(8)
    b = random_batch(rng, m=6)
    c = rng.normal(size=(3, 2))
    w = np.array([0.3, 1.0, 2.0])
    _, g = conditional_center_loss(b, c, w)
    coeff = 2 * w[b.labels] / b.m
    np.testing.assert_allclose(g, coeff[:, None] * (b.features - c[b.labels]), rtol=1e-14)


def test_cost_weighted_all_wrong_equals_plain_ce():
    costs = LossCostMatrix.zero_one(3)
    # argmax of each row differs from its label
    z = np.array([[3.0, 0, 0], [0, 0, 3.0], [0, 3.0, 0]])
    b = LabeledBatch(np.zeros((3, 2)), z, np.array([1, 0, 2]))
    l0, g0 = softmax_ce(b)
    l1, g1 = cost_weighted_ce(b, costs)
    assert l1 == pytest.approx(l0, rel=1e-15)
    np.testing.assert_allclose(g1, g0, rtol=1e-15)


def test_cost_weighted_all_correct_is_zero():
    z = np.array([[3.0, 0, 0], [0, 3.0, 0]])
    b = LabeledBatch(np.zeros((2, 2)), z, np.array([0, 1]))
    loss, g = cost_weighted_ce(b, default_clinical_matrix("loss"))
    assert loss == 0.0 and np.all(g == 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_cost_weighted_mixed_batch_resummed(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, m=8)
    costs = default_clinical_matrix("loss")
    loss, _ = cost_weighted_ce(b, costs)
    total = 0.0
    for i in range(b.m):
        z = b.logits[i]
        p = np.exp(z) / np.exp(z).sum()
        total += -costs.entries[b.labels[i], int(np.argmax(z))] * np.log(p[b.labels[i]])
    assert loss == pytest.approx(total / b.m, rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_cost_weighted_expected_mode_gradient(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, m=4)
    costs = LossCostMatrix(rng.uniform(0, 3, size=(3, 3)) * (1 - np.eye(3)))
    loss, g = cost_weighted_ce(b, costs, mode="expected")
    z = b.logits.copy()
    num = central_diff(lambda: cost_weighted_ce(LabeledBatch(b.features, z, b.labels), costs, "expected")[0], [z])
    assert rel_error([g], num) < 1e-5
    p = softmax(b.logits)
    want = -np.mean([(costs.entries[y] @ p[i]) * np.log(p[i, y]) for i, y in enumerate(b.labels)])
    assert loss == pytest.approx(want, rel=1e-12)


def test_cost_weighted_rejects_size():
    b = random_batch(np.random.default_rng(0))
    with pytest.raises(RejectedInputError):
        cost_weighted_ce(b, LossCostMatrix.zero_one(4))


def test_dcsl_full_reduction_is_softmax_bitwise():
    rng = np.random.default_rng(9)
    b = random_batch(rng, m=7)
    c = rng.normal(size=(3, 2))
    l0, g0 = softmax_ce(b)
    l1, g1, gf = dcsl_loss(b, c, np.ones(3), ScoreCostMatrix.identity(3), 0.0)
    assert l0 == l1
    assert np.array_equal(g0, g1)
    assert np.all(gf == 0.0)


def test_default_lambda():
    assert DEFAULT_LAMBDA_C == 0.05


@pytest.mark.parametrize("transform", ["matrix", "label_row"])
@pytest.mark.parametrize("seed", range(15))
def test_dcsl_gradient(seed, transform):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, m=5, n=3, d=2)
    c = rng.normal(size=(3, 2))
    w = rng.uniform(0.1, 1.0, size=3)
    xi = ScoreCostMatrix(rng.uniform(0.2, 3.0, size=(3, 3)))
    lam = rng.uniform(0, 1)
    _, gz, gx = dcsl_loss(b, c, w, xi, lam, transform)
    z, x = b.logits.copy(), b.features.copy()
    num = central_diff(lambda: dcsl_loss(LabeledBatch(x, z, b.labels), c, w, xi, lam, transform)[0], [z, x])
    assert rel_error([gz, gx], num) < 1e-5


def test_dcsl_rejects_negative_lambda():
    b = random_batch(np.random.default_rng(0))
    with pytest.raises(RejectedInputError):
        dcsl_loss(b, np.zeros((3, 2)), np.ones(3), ScoreCostMatrix.identity(3), -0.1)


def test_losses_nonnegative():
    rng = np.random.default_rng(12)
    for _ in range(50):
        b = random_batch(rng)
        c = rng.normal(size=(3, 2))
        w = rng.uniform(0.01, 2, size=3)
        assert softmax_ce(b, w)[0] >= 0
        assert conditional_center_loss(b, c, w)[0] >= 0
        assert cost_weighted_ce(b, default_clinical_matrix("loss"))[0] >= 0
        assert dcsl_loss(b, c, w, default_clinical_matrix("score"))[0] >= 0


def test_batch_validation():
    with pytest.raises(RejectedInputError):
        LabeledBatch(np.zeros((2, 2)), np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(RejectedInputError):
        LabeledBatch(np.zeros((2, 2)), np.zeros((3, 3)), np.array([0, 1]))
