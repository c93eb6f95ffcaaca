import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locstat.locpoly import (DesignSingular, IllConditioned, LocPolyConfig, bandwidth_rule, bias_sweep,
                             bias_sweep_curve, block_array, covariance_curve, design_row, fit_local_poly,
                             functional_data, jackknife_var_se, local_weights, psi_exact,
                             stationarity_deviation, variance_sweep)
from locstat.measure import ContractViolation
from locstat.simulate import SimulationPlan, sample_triangular_array
from locstat.zoo import constant_family, two_state, two_state_pi


def test_design_row_examples():
    assert np.allclose(design_row(50, 100, 0.5, 0.1, 4), [1, 0, 0, 0])
    assert np.allclose(design_row(60, 100, 0.5, 0.1, 2), [1, 1])
    assert np.allclose(design_row(60, 100, 0.5, 0.1, 3), [1, 1, 0.5])
    rows = design_row(np.array([50, 60]), 100, 0.5, 0.1, 3)
    assert rows.shape == (2, 3)


def test_constant_reproduced_exactly():
    fit = fit_local_poly(np.full(400, 3.7), 0.5, LocPolyConfig(3, 0.1))
    assert fit.psi == pytest.approx(3.7, abs=1e-13)
    assert np.abs(fit.H_hat[1:]).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.floats(0.25, 0.75), st.floats(0.08, 0.2), st.lists(st.floats(-3, 3), min_size=1,
                                                                               max_size=4))
def test_polynomial_reproduction(k, u, b, coef):
    coef = coef[:k]  # degree < k
    n = 500
    x = np.arange(1, n + 1) / n
    y = np.polyval(coef[::-1], x)
    fit = fit_local_poly((np.arange(1, n + 1), y), u, LocPolyConfig(k, b))
    assert fit.psi == pytest.approx(np.polyval(coef[::-1], u), abs=1e-9)
    if k >= 2 and len(coef) >= 1:
        d = np.polyval(np.polyder(np.array(coef[::-1])), u) if len(coef) > 1 else 0.0
        assert fit.derivative(1) == pytest.approx(d, abs=1e-8)


def test_linear_example():
    n = 1000
    t = np.arange(1, n + 1)
    fit = fit_local_poly((t, 2 * t / n), 0.4, LocPolyConfig(2, 0.1))
    assert fit.psi == pytest.approx(0.8, abs=1e-9)
    assert fit.derivative(1) == pytest.approx(2.0, abs=1e-9)


def test_cubic_bias_shrinks_with_b():
    n = 4000
    t = np.arange(1, n + 1)
    errs = [abs(fit_local_poly((t, (t / n) ** 3), 0.5, LocPolyConfig(3, b)).psi - 0.125) for b in (0.2, 0.1)]
    assert errs[1] < errs[0]
    # the quadratic fit leaves only the cubic term, bounded by b^3 u-moment of the kernel
    assert errs[1] <= 0.1 ** 3


def test_conditioning_interior():
    for k in (1, 2, 3):
        _, D, cond, ridge = local_weights(1000, 0.5, LocPolyConfig(k, 0.1))
        assert cond <= 1e3 and not ridge


def test_boundary_flag_and_errors():
    fit = fit_local_poly(np.ones(200), 0.02, LocPolyConfig(2, 0.1))
    assert fit.boundary and fit.flag == "boundary"
    with pytest.raises(ContractViolation):
        LocPolyConfig(2, 0.01).check_n(100)
    with pytest.raises(DesignSingular):
        local_weights(100, 0.5, LocPolyConfig(3, 0.009))
    with pytest.raises(ContractViolation):
        LocPolyConfig(2, 0.1, kernel_K=lambda x: np.where(np.abs(x) <= 1, 1.0, 0.0))
    with pytest.raises(ContractViolation):
        LocPolyConfig(2, 1.5)


def test_ill_conditioning_adds_ridge():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit = fit_local_poly(np.ones(3000), 0.5, LocPolyConfig(8, 0.003))
    assert fit.ridge and fit.flag == "ridge"
    assert any(issubclass(x.category, IllConditioned) for x in w)
    assert fit.psi == pytest.approx(1.0, abs=1e-6)


def test_blocks_and_functional_data():
    paths = np.array([[0, 1, 1, 0, 1]])
    # n = 4; blocks (X_t, X_{t+1}) for t = 1..3
    Z = block_array(paths, 2)
    assert Z.shape == (1, 3, 2)
    assert np.array_equal(Z[0, 0], [1, 1])
    y = functional_data(paths, lambda Z: Z[:, 0] * Z[:, 1], 2)
    assert np.array_equal(y[0], [1, 0, 0])


def test_psi_exact_testbed():
    fam = two_state()
    us = np.array([0.0, 0.5])
    got = psi_exact(fam, lambda Z: (Z[:, 0] == 1).astype(float), 1, us)
    ref = [two_state_pi(fam.meta["a"], fam.meta["b"], u)[1] for u in us]
    assert np.allclose(got, ref, atol=1e-14)


def test_bias_sweep_exact_for_polynomials():
    res = bias_sweep_curve(lambda x: 1 + 2 * x, 0.5, 2, (0.4, 0.2, 0.1))
    assert max(e for _, e in res.rows) <= 1e-12
    assert res.exact


def test_bias_sweep_testbed_k2():
    res = bias_sweep(two_state(), lambda Z: (Z[:, 0] == 1).astype(float), 1, 0.5, 2)
    assert 1.7 <= res.slope <= 2.3


def test_deterministic_data_has_zero_variance():
    fam = constant_family(np.array([[0.0, 1.0], [1.0, 0.0]]))
    paths = np.tile(np.arange(201) % 2, (5, 1))
    y = functional_data(paths, lambda Z: Z[:, 0], 1)
    W = local_weights(200, 0.5, LocPolyConfig(2, 0.2))[0][0]
    assert np.var(y @ W) == 0.0


def test_variance_sweep_scaling():
    cfg = LocPolyConfig(2, 0.2)
    res = variance_sweep(two_state(), lambda Z: Z[:, 0], 1, 0.5, cfg, (200, 400, 800), 300, seed=1)
    assert -1.3 <= res.slope <= -0.7
    assert bandwidth_rule(400, 0.2, 200) == pytest.approx(0.2 * 2 ** -0.2)


def test_jackknife_closed_form_and_halving():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    loo = np.array([np.var(np.delete(x, i), ddof=1) for i in range(x.size)])
    brute = np.sqrt((x.size - 1) / x.size * ((loo - loo.mean()) ** 2).sum())
    assert jackknife_var_se(x) == pytest.approx(brute, rel=1e-10)
    se_r = np.mean([jackknife_var_se(rng.normal(size=500)) ** 2 for _ in range(200)])
    se_2r = np.mean([jackknife_var_se(rng.normal(size=1000)) ** 2 for _ in range(200)])
    assert se_2r / se_r == pytest.approx(0.5, abs=0.08)


def test_covariance_curve_overlay():
    fam = two_state()
    paths = sample_triangular_array(SimulationPlan(400, 400, 2, fam))
    cc = covariance_curve(fam, [0.3, 0.5, 0.7], LocPolyConfig(2, 0.2), paths)
    assert np.all(np.abs(cc.estimate - cc.exact) <= 4 * cc.mc_se + 0.01)
    assert cc.to_csv().startswith("u,cov_hat,mc_se,cov_exact\n")


def test_stationarity_deviation_is_order_one_over_n():
    rows = stationarity_deviation(two_state(), lambda Z: Z[:, 0], 1, 0.5, LocPolyConfig(2, 0.2))
    scaled = [r[2] for r in rows]
    assert max(scaled) / min(scaled) <= 2.0
