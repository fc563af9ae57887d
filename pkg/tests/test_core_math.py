import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from derivmanip import core_math as cm
from derivmanip.errors import InvalidInputError

KINDS = [cm.CCE, cm.MAE, cm.MSE, cm.gce(0.3), cm.gce(0.7), cm.gce(1.0)]


def mp_softmax(z, dps=50):
    with mpmath.workdps(dps):
        e = [mpmath.exp(mpmath.mpf(v)) for v in z]
        s = mpmath.fsum(e)
        return [float(v / s) for v in e]


def fd_loss_grad(kind, logits, y, step=1e-5):
    """Central differences of loss_value(softmax(z)[y]) per logit, batched."""
    n, C = logits.shape
    out = np.empty_like(logits)
    rows = np.arange(n)
    for j in range(C):
        zp, zm = logits.copy(), logits.copy()
        zp[:, j] += step
        zm[:, j] -= step
        fp = cm.loss_value(kind, cm.softmax(zp)[rows, y])
        fm = cm.loss_value(kind, cm.softmax(zm)[rows, y])
        out[:, j] = (fp - fm) / (2 * step)
    return out


def random_batch(rng, n, C, scale=2.0):
    return rng.normal(scale=scale, size=(n, C)), rng.integers(0, C, size=n)


# --- softmax -----------------------------------------------------------------


def test_softmax_uniform():
    np.testing.assert_array_equal(cm.softmax(np.zeros(4)), np.full(4, 0.25))


def test_softmax_shift_invariance():
    # dyadic values so the shift itself is exact
    z = np.array([0.25, -1.25, 2.5, 0.0])
    np.testing.assert_array_equal(cm.softmax(z + 1024.0), cm.softmax(z))


def test_softmax_matches_high_precision():
    z = [2.0, 1.0, 0.0]
    np.testing.assert_allclose(cm.softmax(np.array(z)), mp_softmax(z), rtol=1e-15, atol=0)


def test_softmax_large_logits_stay_finite():
    p = cm.softmax(np.array([1e4, -1e4, 0.0]))
    assert np.all(np.isfinite(p)) and p[0] == 1.0


@pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0], [1.0]])
def test_softmax_rejects_bad_input(bad):
    with pytest.raises(InvalidInputError):
        cm.softmax(np.array(bad))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(z):
    p = cm.softmax(z)
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all((p >= 0) & (p <= 1))


# --- softmax_grad_target -----------------------------------------------------


def test_softmax_grad_target_uniform_two_class():
    np.testing.assert_allclose(cm.softmax_grad_target(np.array([0.5, 0.5]), 0), [0.25, -0.25])


def test_softmax_grad_target_saturated():
    np.testing.assert_array_equal(cm.softmax_grad_target(np.array([0.0, 1.0, 0.0]), 1), np.zeros(3))


def test_softmax_grad_target_index_error():
    with pytest.raises(IndexError):
        cm.softmax_grad_target(np.array([0.5, 0.5]), 2)


def test_softmax_grad_target_finite_differences():
    rng = np.random.default_rng(1)
    z, y = random_batch(rng, 500, 5)
    rows = np.arange(len(y))
    fd = np.empty_like(z)
    h = 1e-6
    for j in range(z.shape[1]):
        zp, zm = z.copy(), z.copy()
        zp[:, j] += h
        zm[:, j] -= h
        fd[:, j] = (cm.softmax(zp)[rows, y] - cm.softmax(zm)[rows, y]) / (2 * h)
    assert np.max(np.abs(cm.softmax_grad_target(cm.softmax(z), y) - fd)) < 1e-8


# --- loss_value --------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS, ids=str)
def test_losses_vanish_at_perfect_prediction(kind):
    assert cm.loss_value(kind, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_cce_at_half():
    assert cm.loss_value(cm.CCE, 0.5) == pytest.approx(0.6931471805599453, rel=1e-15)


def test_gce_small_q_approaches_cce():
    assert cm.loss_value(cm.gce(1e-6), 0.5) == pytest.approx(np.log(2.0), abs=1e-3)


def test_cce_guard_at_zero():
    assert cm.loss_value(cm.CCE, 0.0) == pytest.approx(-np.log(cm.LOG_EPS))


def test_gce_rejects_bad_q():
    with pytest.raises(InvalidInputError):
        cm.gce(1.5)


# --- grad_logits -------------------------------------------------------------


def test_cce_grad_uniform_two_class():
    np.testing.assert_allclose(cm.grad_logits(cm.CCE, np.array([0.5, 0.5]), 0), [-0.5, 0.5])


def test_grad_logits_closed_forms():
    p = np.array([0.2, 0.5, 0.3])
    y, py = 1, 0.5
    other = np.array([0.2, 0.3])
    mse = cm.grad_logits(cm.MSE, p, y)
    assert mse[1] == pytest.approx(-2 * py * (py - 1) ** 2)
    np.testing.assert_allclose(mse[[0, 2]], -2 * py * (py - 1) * other)
    g = cm.grad_logits(cm.gce(0.7), p, y)
    assert g[1] == pytest.approx(py**0.7 * (py - 1))
    np.testing.assert_allclose(g[[0, 2]], py**0.7 * other)


@pytest.mark.parametrize("kind", KINDS, ids=str)
@pytest.mark.parametrize("C", [2, 5, 10])
def test_grad_logits_finite_differences(kind, C):
    rng = np.random.default_rng(C)
    z, y = random_batch(rng, 300, C)
    g = cm.grad_logits(kind, cm.softmax(z), y)
    assert np.max(np.abs(g - fd_loss_grad(kind, z, y))) < 1e-7


@pytest.mark.parametrize("kind", KINDS, ids=str)
def test_grad_logits_zero_sum_and_l1_identity(kind):
    rng = np.random.default_rng(7)
    z, y = random_batch(rng, 400, 6)
    p = cm.softmax(z)
    g = cm.grad_logits(kind, p, y)
    assert np.max(np.abs(g.sum(axis=1))) < 1e-10
    l1 = np.abs(g).sum(axis=1)
    assert np.max(np.abs(l1 - cm.weight_magnitude(kind, cm.target_prob(p, y)))) < 1e-10


def test_direction_sharing():
    rng = np.random.default_rng(3)
    z, y = random_batch(rng, 400, 4)
    p = cm.softmax(z)
    py = cm.target_prob(p, y)[:, None]
    base = cm.grad_logits(cm.CCE, p, y)
    np.testing.assert_allclose(cm.grad_logits(cm.MAE, p, y), py * base, rtol=0, atol=1e-10)
    np.testing.assert_allclose(cm.grad_logits(cm.MSE, p, y), 2 * py * (1 - py) * base, rtol=0, atol=1e-10)
    np.testing.assert_allclose(cm.grad_logits(cm.gce(0.4), p, y), py**0.4 * base, rtol=0, atol=1e-10)


def test_grad_logits_index_error():
    with pytest.raises(IndexError):
        cm.grad_logits(cm.CCE, np.array([0.2, 0.8]), -1)


# --- weight_magnitude --------------------------------------------------------


def test_weight_magnitude_values():
    assert cm.weight_magnitude(cm.CCE, 0.5) == 1.0
    assert cm.weight_magnitude(cm.MAE, 0.0) == 0.0
    assert cm.weight_magnitude(cm.MAE, 1.0) == 0.0
    assert cm.weight_magnitude(cm.MAE, 0.5) == 0.5


@pytest.mark.parametrize(
    "kind,mode",
    [(cm.CCE, 0.0), (cm.MAE, 0.5), (cm.MSE, 1 / 3), (cm.gce(0.3), 0.3 / 1.3), (cm.gce(0.7), 0.7 / 1.7)],
    ids=str,
)
def test_emphasis_mode_grid_argmax(kind, mode):
    ps = np.linspace(0, 1, 10001)
    assert abs(ps[np.argmax(cm.weight_magnitude(kind, ps))] - mode) <= 1e-4
    assert cm.emphasis_mode(kind) == pytest.approx(mode)
