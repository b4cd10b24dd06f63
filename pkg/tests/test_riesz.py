import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mediator import RieszFunctionClass, fit_riesz, riesz_loss
from mediator.errors import SingularGram, ValidationError
from mediator.riesz import _Basis, fit_riesz_linear


def _discrete(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 2, n).astype(float)
    a = (rng.uniform(size=n) < np.where(w == 1, 0.7, 0.3)).astype(float)
    return np.column_stack([a, w])


def _empirical_ipw(x, level):
    # 1{a = level} / Phat(A = level | w), computed by counting
    out = np.zeros(len(x))
    for wv in (0.0, 1.0):
        cell = x[:, 1] == wv
        p = np.mean(x[cell, 0] == level)
        out[cell & (x[:, 0] == level)] = 1 / p
    return out


@pytest.mark.parametrize("level", [0.0, 1.0])
def test_saturated_basis_recovers_inverse_propensity(level):
    x = _discrete(2000, 0)
    xs = x.copy()
    xs[:, 0] = level
    fit = fit_riesz_linear(x, xs, 1.0, RieszFunctionClass(degree=1, lam=1e-10))
    np.testing.assert_allclose(fit(x), _empirical_ipw(x, level), rtol=1e-6, atol=1e-6)


def test_weighted_outer_and_average_of_copies():
    x = _discrete(1000, 1)
    xs = x.copy()
    xs[:, 0] = 1.0
    wt = 1 + x[:, 1]
    fit = fit_riesz_linear(x, [xs, xs], wt, RieszFunctionClass(degree=1, lam=1e-10))
    single = fit_riesz_linear(x, xs, wt, RieszFunctionClass(degree=1, lam=1e-10))
    np.testing.assert_allclose(fit(x), single(x), atol=1e-10)
    # E[alpha h] = E[w h(1, W)] for the indicator h = 1{a=1, w=1}
    h = lambda z: ((z[:, 0] == 1) & (z[:, 1] == 1)).astype(float)  # noqa: E731
    assert np.mean(fit(x) * h(x)) == pytest.approx(np.mean(wt * h(xs)), rel=1e-6)


def test_closed_form_minimizes_loss():
    x = _discrete(500, 2)
    xs = x.copy()
    xs[:, 0] = 1.0
    fit = fit_riesz_linear(x, xs, 1.0, RieszFunctionClass(degree=1, lam=1e-12))
    basis = _Basis(x, [xs], 1)
    phi, phi_s = basis(x), basis(xs)

    def loss(c):
        return np.mean((phi @ c) ** 2 - 2 * (phi_s @ c))

    rng = np.random.default_rng(0)
    for _ in range(20):
        assert loss(fit.coef + rng.normal(0, 0.1, len(fit.coef))) >= loss(fit.coef) - 1e-10
    assert fit.loss == pytest.approx(loss(fit.coef))


def test_clip_applies():
    x = np.column_stack([np.r_[np.ones(99), 0.0], np.zeros(100)])
    xs = x.copy()
    xs[:, 0] = 0.0
    fit = fit_riesz_linear(x, xs, 1.0, RieszFunctionClass(degree=1, lam=1e-10, clip=5.0))
    assert fit(x).max() == 5.0


def test_singular_gram_raises():
    x = np.zeros((10, 2))
    with pytest.raises(SingularGram):
        fit_riesz_linear(x, x, 1.0, RieszFunctionClass(degree=1, lam=0.0), treat_col=None)


def test_feedforward_approaches_ratio():
    x = _discrete(2000, 3)
    xs = x.copy()
    xs[:, 0] = 1.0
    cls = RieszFunctionClass(kind="feedforward", hidden=(16,), epochs=60, lr=1e-2, batch=64)
    fit = fit_riesz(x, xs, 1.0, cls, seed=0)
    truth = _empirical_ipw(x, 1.0)
    assert np.mean(np.abs(fit(x) - truth)) < 0.25
    assert fit.trace[-1] < fit.trace[0]


@given(lam=st.floats(-1, -1e-9))
@settings(max_examples=5)
def test_negative_penalty_rejected(lam):
    with pytest.raises(ValidationError):
        RieszFunctionClass(lam=lam)


def test_from_dict_aliases():
    c = RieszFunctionClass.from_dict({"kind": "nn", "lambda": 0.1, "hidden": 8})
    assert c.kind == "feedforward" and c.lam == 0.1 and c.hidden == (8,)
    with pytest.raises(ValidationError):
        RieszFunctionClass.from_dict({"width": 3})


def test_riesz_loss_on_augmented(small_aug):
    from mediator.policies import Policy, ShiftMap
    shift = ShiftMap(Policy.constant(1))
    val = riesz_loss(lambda z: np.zeros(len(z)), small_aug, shift=shift)
    assert val == 0.0
    one = riesz_loss(lambda z: np.ones(len(z)), small_aug, shift=shift)
    assert one == pytest.approx(-1.0)
