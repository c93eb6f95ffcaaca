import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from locstat.measure import StateSpace, TransitionKernel, WeightFunction, dobrushin_coeff
from locstat.oracle import derivative_recursion, fd_derivative_oracle, stationary_vector
from locstat.zoo import (Curve, DoeblinModel, INARModel, ModelInvariantViolated, ModelSpecError, PmfCurve,
                         ar1_example, build_doeblin, build_inar, build_model, build_random_env, constant_family,
                         doeblin_sine, faa_di_bruno, inar1_example, inarch_direct_rows, inarch_model,
                         p_order_vectorize, random_env_example, random_smooth, sc_condition_report,
                         setar_example, two_state, two_state_pi)
from locstat.zoo.curves import sigmoid_bundle
from locstat.zoo.inar import inar_porder_kernel, inar_rows
from locstat.zoo.random_env import RandomEnvLogisticModel, marginal_y
from locstat.zoo.tvar import Discretizer, LinearAR, TvARModel, absorption_report, build_tvar


def fd_rel_err(fam, u, ell):
    a = derivative_recursion(fam, u, ell).orders[ell].weights
    b = fd_derivative_oracle(fam, u, ell).weights
    V = fam.V0.values
    return (np.abs(a - b) @ V) / (np.abs(b) @ V)


# curves ------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["poly", "sin"]), st.lists(st.floats(-2, 2), min_size=1, max_size=4),
       st.floats(0.05, 0.95), st.integers(1, 3))
def test_curve_derivatives_match_fd(kind, coeffs, u, ell):
    c = Curve(kind, coeffs)
    h = 1e-3
    f = lambda v: c.deriv(v, ell - 1)
    fd = (f(u + h) - f(u - h)) / (2 * h)
    assert c.deriv(u, ell) == pytest.approx(fd, abs=1e-4 * (1 + abs(fd)))


def test_faa_di_bruno_exp_of_sin():
    # d^n/du^n exp(sin u) against central differences
    u = 0.4
    inner = [np.sin(u), np.cos(u), -np.sin(u), -np.cos(u)]
    outer = [np.exp(np.sin(u))] * 4
    h = 1e-3
    g = lambda v: np.exp(np.sin(v))
    fd3 = (g(u + 2 * h) - 2 * g(u + h) + 2 * g(u - h) - g(u - 2 * h)) / (2 * h ** 3)
    assert faa_di_bruno(outer, inner, 3) == pytest.approx(fd3, rel=1e-5)


def test_sigmoid_bundle():
    eta = [np.array([0.3]), np.array([0.7]), np.array([-0.2]), np.array([0.1])]
    out = sigmoid_bundle(eta, 3)
    e = lambda v: 0.3 + 0.7 * v - 0.1 * v ** 2 + 0.1 / 6 * v ** 3
    s = lambda v: 1 / (1 + np.exp(-e(v)))
    h = 1e-4
    assert out[1][0] == pytest.approx((s(h) - s(-h)) / (2 * h), rel=1e-7)
    assert out[2][0] == pytest.approx((s(h) - 2 * s(0) + s(-h)) / h ** 2, rel=1e-5)


def test_curve_rejects_bad_input():
    with pytest.raises(ValueError):
        Curve("cubic", (1.0,))
    with pytest.raises(ValueError):
        Curve("sin", (1, 2, 3, 4, 5))


# mixtures ----------------------------------------------------------------

def test_two_state_closed_form():
    fam = two_state()
    for u in (0.0, 0.3, 1.0):
        assert np.allclose(stationary_vector(fam.matrix(u)), two_state_pi(fam.meta["a"], fam.meta["b"], u))


def test_random_smooth_is_stochastic_and_reproducible():
    a, b = random_smooth(5, 11), random_smooth(5, 11)
    for u in (0.0, 0.5, 1.0):
        assert np.array_equal(a.matrix(u), b.matrix(u))
        assert np.allclose(a.matrix(u).sum(axis=1), 1, atol=1e-14)
        a.check_derivative_rows(u)


# Doeblin -----------------------------------------------------------------

def test_doeblin_flat_density_is_rank_one():
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    fam = build_doeblin(DoeblinModel(mu, np.ones((4, 4)), (), c_minus=1.0))
    for u in (0.0, 0.7):
        P = TransitionKernel(fam.matrix(u), fam.space)
        assert dobrushin_coeff(P, WeightFunction.constant(4)) == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(stationary_vector(fam.matrix(u)), mu)


def test_doeblin_sine_rows_and_fd():
    fam = build_doeblin(doeblin_sine())
    for u in np.linspace(0, 1, 11):
        assert np.abs(fam.matrix(u).sum(axis=1) - 1).max() <= 1e-12
        fam.check_derivative_rows(u)
    assert fd_rel_err(fam, 0.3, 1) <= 1e-6


def test_doeblin_density_floor_enforced():
    bad = doeblin_sine(amp=0.3)
    with pytest.raises(ModelInvariantViolated):
        build_doeblin(DoeblinModel(bad.base_measure, bad.G0, bad.terms, c_minus=0.9))


# TvAR --------------------------------------------------------------------

def test_ar1_discretization_converges_to_gaussian():
    errs = []
    for bins in (51, 101, 201):
        fam = ar1_example(0.5, L=8.0, bins=bins, k=1)
        pi = stationary_vector(fam.matrix(0.5))
        edges = np.linspace(-8, 8, bins + 1)
        exact = np.diff(stats.norm.cdf(edges, scale=np.sqrt(4 / 3)))
        errs.append(np.abs(pi - exact).sum())
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 0.02


def test_constant_tvar_has_zero_bundles():
    model = TvARModel(LinearAR((Curve.const(0.5),)))
    fam = build_tvar(model, Discretizer(6.0, 41), 2)
    arr = derivative_recursion(fam, 0.4, 2).array()
    assert np.abs(arr[1:]).max() <= 1e-14


def test_setar_fd_at_full_resolution():
    fam = setar_example(bins=801, k=2)
    assert fd_rel_err(fam, 0.5, 1) <= 1e-4


def test_tvar_rows_exactly_stochastic_on_coarse_grid():
    fam = ar1_example(0.6, L=7.0, bins=11, k=2)
    for u in (0.0, 0.5, 1.0):
        assert np.abs(fam.matrix(u).sum(axis=1) - 1).max() <= 1e-14
        assert fam.matrix(u).min() >= 0
    assert absorption_report(fam) is not None


# INAR --------------------------------------------------------------------

def test_inar_examples():
    model = INARModel((PmfCurve("bernoulli", Curve.const(0.5)),), PmfCurve("poisson", Curve.const(1.0)), 20)
    fam = build_inar(model, 1, 20)
    P = fam.matrix(0.3)
    assert P[0, 0] == pytest.approx(np.exp(-1), abs=1e-14)
    assert P[1, 0] == pytest.approx(0.5 * np.exp(-1), abs=1e-14)
    assert np.allclose(P[0, :20], stats.poisson.pmf(np.arange(20), 1.0), atol=1e-15)


def test_inarch_rows_are_poisson():
    ich = inarch_model(Curve.poly(1.0, 0.3), (Curve.poly(0.3, 0.1), Curve.const(0.2)), 20)
    for u in (0.0, 0.4, 1.0):
        assert np.abs(inar_rows(ich, u, 0, 20)[0][0] - inarch_direct_rows(ich, u, 20)).max() <= 1e-12


def test_inar_derivatives_match_fd():
    fam = build_inar(inar1_example(), 2)
    assert fd_rel_err(fam, 0.4, 1) <= 1e-6
    assert fd_rel_err(fam, 0.4, 2) <= 1e-5


# p-order vectorization ---------------------------------------------------

def test_p_order_identity_for_p1():
    R = inar_porder_kernel(inar1_example(), 1)
    fam = p_order_vectorize(R)
    assert np.array_equal(fam.matrix(0.5), R.eval_fn(0.5))


def test_p_order_shift_structure():
    model = INARModel((PmfCurve("bernoulli", Curve.const(0.25)), PmfCurve("bernoulli", Curve.poly(0.15, 0.05))),
                      PmfCurve("poisson", Curve.const(0.5)), 12)
    fam = build_inar(model, 1, 12)
    m = 13
    Q = fam.matrix(0.5).reshape(m, m, m, m)
    for x1 in range(m):
        for x2 in range(m):
            assert Q[x1, x2].sum() == pytest.approx(1.0)
            assert np.all(np.delete(Q[x1, x2], x2, axis=0) == 0)


# random environment ------------------------------------------------------

def test_random_env_decoupled_marginal():
    fam = random_env_example(bins=21, beta=Curve.const(0.0))
    model = fam.meta["model"]
    for u in (0.2, 0.8):
        pi_y = marginal_y(fam, stationary_vector(fam.matrix(u)))
        p01 = 1 / (1 + np.exp(-model.a0(u)))
        p11 = 1 / (1 + np.exp(-(model.a0(u) + model.a1(u))))
        a, b = p01, 1 - p11  # 0 -> 1 and 1 -> 0 rates
        assert np.allclose(pi_y, np.array([b, a]) / (a + b), atol=1e-12)


def test_random_env_fd():
    fam = random_env_example(bins=21, k=2)
    assert fd_rel_err(fam, 0.4, 1) <= 1e-4


def test_random_env_constant_in_u():
    env = ar1_example(0.5, L=7.0, bins=11, k=2)
    model = RandomEnvLogisticModel(Curve.const(-0.3), Curve.const(0.5), Curve.const(0.2), env)
    fam = build_random_env(model, 2)
    assert np.abs(derivative_recursion(fam, 0.5, 2).array()[1:]).max() <= 1e-14


# condition reports -------------------------------------------------------

def test_sc_report_rank_one_doeblin():
    mu = np.full(3, 1 / 3)
    fam = build_doeblin(DoeblinModel(mu, np.ones((3, 3)), (), c_minus=1.0))
    rep = sc_condition_report(fam, 4, 2, 1, 2)
    assert rep["SC1"]["passed"] and rep["SC1"]["lambda"] == 0.0 and rep["SC1"]["b"] == pytest.approx(1.0)


def test_sc_report_testbed_and_tvar():
    assert sc_condition_report(two_state(), 4, 2, 1, 2)["passed"]
    rep = sc_condition_report(ar1_example(0.5, bins=81, k=2), 4, 2, 1, 2)
    assert rep["SC1"]["passed"]
    assert all(np.isfinite(c["C"]) for c in rep["SC3"]["constants"].values())


# JSON model blocks -------------------------------------------------------

def test_build_model_blocks():
    b = build_model({"family": "two_state"})
    assert b.family.size == 2 and b.sampler_model is b.family
    b = build_model({"family": "inar", "curves": {"alpha1": {"type": "poly", "coeffs": [0.3, 0.2]},
                                                  "lambda": {"type": "sin", "coeffs": [1.0, 0.5]}}})
    assert b.native is not None
    b = build_model({"family": "tvar", "p": 1, "curves": {"a1": {"type": "poly", "coeffs": [0.5]}},
                     "discretizer": {"L": 6, "bins": 31}, "k": 2})
    assert b.discretized and b.family.size == 31


@pytest.mark.parametrize("spec, field", [
    ({"family": "nope"}, "model.family"),
    ({"family": "two_state", "curves": {"a": {"type": "spline", "coeffs": [1]}}}, "model.curves.a.type"),
    ({"family": "two_state", "curves": {"a": {"type": "poly", "coeffs": []}}}, "model.curves.a.coeffs"),
    ({"family": "inar", "curves": {"lambda": {"type": "poly", "coeffs": [1]}}}, "model.curves.alpha1"),
    ({"family": "constant"}, "model.matrix"),
])
def test_build_model_errors_name_field(spec, field):
    with pytest.raises(ModelSpecError) as e:
        build_model(spec)
    assert e.value.field == field
