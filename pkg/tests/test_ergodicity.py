import numpy as np
import pytest

from locstat.ergodicity import (DriftCertificate, ExactlyCoupled, NoMinorization, certify_family, check_drift,
                                construct_minorization, decay_curve, find_drift_constants, fit_geometric_decay,
                                simultaneous_sweep, window_product, window_tuples)
from locstat.measure import WeightFunction
from locstat.oracle import stationary_vector
from locstat.zoo import ar1_example, build_doeblin, constant_family, doeblin_sine, setar_example, two_state

GRID = np.round(np.linspace(0, 1, 11), 12)


def rank_one(nu):
    return np.tile(nu, (len(nu), 1))


def test_drift_examples():
    nu = np.array([0.2, 0.5, 0.3])
    V = np.array([1.0, 2.0, 5.0])
    assert check_drift(rank_one(nu), V, 0.0, nu @ V).passed
    assert not check_drift(rank_one(nu), V, 0.0, nu @ V - 1e-6).passed
    assert check_drift(two_state().matrix(0.3), np.ones(2), 0.0, 1.0).passed


def test_drift_ar1():
    fam = ar1_example(0.5, L=8.0, bins=201, k=1)
    x = fam.space.values()
    V = 1.0 + np.abs(x)
    e_abs = np.sqrt(2 / np.pi)
    res = check_drift(fam.matrix(0.5), V, 0.5 + 1e-3, 1 + e_abs)
    assert res.passed
    # PV <= 0.5 V + (0.5 + E|e|) holds for the continuous model; the binned one is close
    res = check_drift(fam.matrix(0.5), V, 0.5, 0.5 + e_abs + 0.05)
    assert res.passed and res.lambda_needed < 0.6


def test_minorization_examples():
    nu = np.array([0.2, 0.5, 0.3])
    eta, nu_hat = construct_minorization(rank_one(nu), np.ones(3), 1.0)
    assert eta == pytest.approx(1.0) and np.allclose(nu_hat, nu)
    eta, _ = construct_minorization(two_state().matrix(0.0), np.ones(2), 1.0)
    assert eta == pytest.approx(0.8, abs=1e-14)
    model = doeblin_sine()
    fam = build_doeblin(model)
    for u in (0.1, 0.6):
        eta, nu_hat = construct_minorization(fam.matrix(u), np.ones(4), 1.0)
        assert eta >= model.c_minus - 1e-12
        assert np.all(eta * nu_hat >= model.c_minus * model.base_measure - 1e-12)
    with pytest.raises(NoMinorization):
        construct_minorization(np.eye(2), np.ones(2), 1.0)


def test_certificate_search_and_verify():
    fam = ar1_example(0.5, L=8.0, bins=101, k=1)
    x = fam.space.values()
    V = WeightFunction(1.0 + np.abs(x))
    cert = find_drift_constants(fam.matrix(0.5), V)
    assert isinstance(cert, DriftCertificate)
    assert cert.level_ok() and cert.verify(fam.matrix(0.5))
    assert 0 < cert.eta <= 1


def test_windows():
    tuples = window_tuples(3, eps=0.1, n_samples=5, seed=0)
    for us in tuples:
        assert len(us) == 3 and max(us) - min(us) <= 0.1 + 1e-12
    fam = two_state()
    P = window_product(fam, (0.2, 0.25))
    assert np.allclose(P, fam.matrix(0.2) @ fam.matrix(0.25))


def test_decay_fit_examples():
    fam = two_state()
    assert fit_geometric_decay(fam, 0.0, WeightFunction.constant(2)).kappa_hat == pytest.approx(0.2, abs=1e-6)
    with pytest.raises(ExactlyCoupled):
        fit_geometric_decay(fam, 1.0)
    with pytest.raises(ExactlyCoupled):
        fit_geometric_decay(constant_family(rank_one(np.array([0.3, 0.7]))), 0.5)


def test_decay_curve_is_exact_power():
    fam = two_state()
    P = fam.matrix(0.0)
    pi = stationary_vector(P)
    d = decay_curve(P, pi, WeightFunction.constant(2), np.array([0]), 6)
    # |d_0 P^n - pi|_TV = 2 pi_1 0.2^n
    assert np.allclose(d, 2 * 0.375 * 0.2 ** np.arange(1, 7), rtol=1e-10)


def test_sweep_examples():
    kmax, _, fits = simultaneous_sweep(two_state(), u_grid=GRID)
    assert kmax == pytest.approx(0.2, abs=1e-6)
    assert fits[0].kappa_hat == pytest.approx(kmax)
    assert fits[-1].exactly_coupled and fits[-1].kappa_hat == 0.0
    rng = np.random.default_rng(0)
    kc, _, fits = simultaneous_sweep(constant_family(rng.dirichlet(np.ones(4), size=4)), u_grid=GRID)
    ks = [f.kappa_hat for f in fits]
    assert max(ks) - min(ks) <= 1e-12
    assert simultaneous_sweep(setar_example(bins=101, k=1), u_grid=GRID)[0] < 1


def test_certify_implies_contraction():
    for fam in (two_state(), build_doeblin(doeblin_sine(), 1), ar1_example(0.5, bins=61, k=1)):
        ok, certs = certify_family(fam, u_grid=GRID, n_windows=3)
        assert ok and all(c is not None for _, c in certs)
        assert simultaneous_sweep(fam, u_grid=GRID)[0] < 1
