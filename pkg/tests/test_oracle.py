from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locstat.measure import ContractViolation, StateSpace, TransitionKernel, WeightFunction, WeightedSignedMeasure
from locstat.oracle import (FundamentalMatrix, NonUniqueInvariant, ProductSpaceTooLarge, StencilOutOfDomain,
                            covariance_from_law, derivative_recursion, fd_derivative_oracle, forward_marginals,
                            invariant_measure, j_dim_derivatives, j_dim_derivatives_leibniz, j_dim_law,
                            local_stationarity_gap, neumann_resolve, stationary_vector, taylor_remainder_check,
                            taylor_sweep, zero_mass_resolve)
from locstat.simulate import sample_stationary_chain
from locstat.zoo import constant_family, random_smooth, two_state, two_state_pi

S2 = StateSpace.range(2)


def test_invariant_measure_examples():
    nu = WeightedSignedMeasure(np.array([0.1, 0.6, 0.3]), StateSpace.range(3))
    assert np.allclose(invariant_measure(TransitionKernel.rank_one(nu)).weights, nu.weights, atol=1e-14)
    fam = two_state()
    assert np.allclose(invariant_measure(TransitionKernel(fam.matrix(0.0), S2)).weights, [0.625, 0.375], atol=1e-14)
    assert np.allclose(invariant_measure(TransitionKernel(fam.matrix(0.5), S2)).weights, [4 / 9, 5 / 9], atol=1e-14)


def test_reducible_chain_rejected():
    with pytest.raises(NonUniqueInvariant):
        invariant_measure(TransitionKernel(np.eye(2), S2))


def test_zero_mass_resolve():
    rng = np.random.default_rng(1)
    P = rng.dirichlet(np.ones(5), size=5)
    Z = FundamentalMatrix.build(P)
    b = rng.normal(size=5)
    b -= b.mean()
    x = zero_mass_resolve(Z, b)
    assert np.abs(x @ (np.eye(5) - P) - b).max() <= 1e-10
    assert abs(x.sum()) <= 1e-12
    assert np.array_equal(zero_mass_resolve(Z, np.zeros(5)), np.zeros(5))
    # dense augmented system as an independent solve
    A = np.vstack([(np.eye(5) - P).T, np.ones(5)])
    y = np.linalg.lstsq(A, np.append(b, 0.0), rcond=None)[0]
    assert np.allclose(x, y, atol=1e-12)
    # iterative route
    assert np.allclose(neumann_resolve(P, b), x, atol=1e-10)
    with pytest.raises(ContractViolation):
        zero_mass_resolve(Z, np.ones(5))


def test_testbed_closed_form_derivatives():
    fam = two_state()
    d = derivative_recursion(fam, 0.0, 1).orders[1].weights
    assert d[1] == pytest.approx(0.40625, abs=1e-12)
    assert d[0] == pytest.approx(-0.40625, abs=1e-12)
    a, b = 0.5, 0.4  # a(0.5), b(0.5)
    closed = (0.4 * b - a * -0.2) / (a + b) ** 2
    fd = fd_derivative_oracle(fam, 0.5, 1, h=1e-3).weights
    assert fd[1] == pytest.approx(closed, rel=1e-9)
    assert fd[0] == pytest.approx(-closed, rel=1e-9)


def test_constant_family_zero_derivatives():
    rng = np.random.default_rng(2)
    fam = constant_family(rng.dirichlet(np.ones(4), size=4))
    arr = derivative_recursion(fam, 0.3, 3).array()
    assert np.all(arr[1:] == 0)
    assert np.abs(fd_derivative_oracle(fam, 0.3, 2).weights).max() <= 1e-12
    rem, bound = taylor_remainder_check(fam, 0.4, 0.1, 2)
    assert rem <= 1e-14 and bound == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 4), st.floats(0.1, 0.9))
def test_recursion_matches_fd(seed, u):
    fam = random_smooth(5, seed)
    arr = derivative_recursion(fam, u, 3).array()
    for ell in (1, 2, 3):
        fd = fd_derivative_oracle(fam, u, ell).weights
        V = fam.V0.values
        assert np.abs(arr[ell] - fd) @ V <= 1e-5 * np.abs(fd) @ V + 1e-12


def test_bundle_orders_have_zero_mass():
    arr = derivative_recursion(random_smooth(6, 9), 0.7, 3).array()
    assert abs(arr[0].sum() - 1) < 1e-14
    assert np.abs(arr[1:].sum(axis=1)).max() < 1e-12


def test_fd_stencil_domain():
    with pytest.raises(StencilOutOfDomain):
        fd_derivative_oracle(two_state(), 0.9999, 1, h=1e-3)


def test_taylor_examples():
    fam = two_state()
    rem, bound = taylor_remainder_check(fam, 0.2, 0.1, 2)
    assert rem <= bound
    rows, M = taylor_sweep(fam, [0.2, 0.5], (0.1, 0.05, 0.025), 3)
    for k, u, h, rem, bound in rows:
        assert rem <= bound * (1 + 1e-9) + 1e-15
        assert rem / abs(h) ** k <= M[k] / factorial(k) * (1 + 1e-9)


def test_taylor_sweep_agrees_with_single_checks():
    fam = random_smooth(4, 3)
    rows, M = taylor_sweep(fam, [0.3], (0.1,), 2)
    for k, u, h, rem, bound in rows:
        r1, _ = taylor_remainder_check(fam, u, h, k, M=M[k])
        assert rem == pytest.approx(r1, rel=1e-10, abs=1e-15)


def test_j_dim_law_examples():
    fam = two_state()
    assert np.allclose(j_dim_law(fam, 0.3, 1).weights, stationary_vector(fam.matrix(0.3)))
    law = j_dim_law(fam, 0.0, 2).weights
    assert law[0] == pytest.approx(0.4375, abs=1e-14)
    assert law.sum() == pytest.approx(1.0)
    with pytest.raises(ProductSpaceTooLarge):
        j_dim_law(random_smooth(5, 0), 0.5, 9, cap=1000)


def test_j_dim_derivatives_routes_agree():
    fam = random_smooth(3, 4)
    a = j_dim_derivatives(fam, 0.4, 3, 2).array()
    b = j_dim_derivatives_leibniz(fam, 0.4, 3, 2)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(j_dim_derivatives(fam, 0.4, 1, 2).array(), derivative_recursion(fam, 0.4, 2).array())
    h = 1e-5
    fd = (j_dim_law(fam, 0.4 + h, 2).weights - j_dim_law(fam, 0.4 - h, 2).weights) / (2 * h)
    assert np.abs(j_dim_derivatives(fam, 0.4, 2, 1).array()[1] - fd).max() <= 1e-5


def test_covariance_matches_simulation():
    fam = two_state()
    cov = covariance_from_law(j_dim_law(fam, 0.5, 2).weights, np.array([0.0, 1.0]))
    path = sample_stationary_chain(fam, 0.5, 200_000, seed=3)[0].astype(float)
    emp = np.cov(path[:-1], path[1:])[0, 1]
    # lag-1 autocorrelation of the testbed is 1 - a - b = 0.1 at u = 0.5
    var = 4 / 9 * 5 / 9
    assert cov == pytest.approx(0.1 * var, rel=1e-12)
    assert abs(emp - cov) <= 5 * var / np.sqrt(path.size)


def test_forward_marginals():
    rng = np.random.default_rng(5)
    P = rng.dirichlet(np.ones(3), size=3)
    fam = constant_family(P)
    pi = stationary_vector(P)
    margs = forward_marginals(fam, 20)
    assert len(margs) == 21
    assert max(np.abs(m.weights - pi).max() for m in margs) <= 1e-14
    assert local_stationarity_gap(fam, 50)[0] <= 1e-14
    fam = two_state()
    margs = forward_marginals(fam, 100)
    w = np.array([m.weights for m in margs])
    assert w.min() >= 0 and w.max() <= 1
    exact = two_state_pi(fam.meta["a"], fam.meta["b"], 0.5)
    assert np.abs(w[50] - exact).max() < 0.01
    # at fixed t/n the gap shrinks as n grows
    w400 = forward_marginals(fam, 400)[200].weights
    assert np.abs(w400 - exact).max() < np.abs(w[50] - exact).max()


def test_local_stationarity_scaling():
    fam = two_state()
    s100 = local_stationarity_gap(fam, 100)[1]
    s200 = local_stationarity_gap(fam, 200)[1]
    assert 0.5 <= s200 / s100 <= 2.0
    V = WeightFunction.constant(2)
    sup, scaled = local_stationarity_gap(fam, 100, V)
    assert scaled == pytest.approx(100 * sup)
