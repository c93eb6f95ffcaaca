import os
import subprocess
import sys

import numpy as np
import pytest

from locstat import _accel
from locstat.oracle import forward_marginals, stationary_vector
from locstat.simulate import (SimulationPlan, burn_in_for, empirical_marginals, paths_to_csv, read_binary,
                              sample_stationary_chain, sample_transitions, sample_triangular_array,
                              write_binary)
from locstat.zoo import (Curve, INARModel, LinearAR, Noise, PmfCurve, ThresholdAR, TvARModel, constant_family,
                         inar1_example, random_smooth, two_state)
from locstat.zoo.inar import inar_rows

needs_numba = pytest.mark.skipif(not _accel.USE_NUMBA, reason="numba disabled")


def test_same_seed_same_paths():
    plan = SimulationPlan(50, 300, 17, two_state())
    assert np.array_equal(sample_triangular_array(plan), sample_triangular_array(plan))
    other = sample_triangular_array(SimulationPlan(50, 300, 18, two_state()))
    assert not np.array_equal(sample_triangular_array(plan), other)


def test_replicate_blocks_are_independent_of_chunking():
    plan = SimulationPlan(40, 100, 3, random_smooth(4, 1))
    full = sample_triangular_array(plan)
    part = sample_triangular_array(plan, rep0=60, replicates=40)
    assert np.array_equal(full[60:], part)


@needs_numba
@pytest.mark.parametrize("model", [
    two_state(), random_smooth(5, 2), inar1_example(),
    TvARModel(ThresholdAR(Curve.poly(0.3, 0.2), Curve.const(-0.4))),
    TvARModel(LinearAR((Curve.const(0.4),)), noise=Noise("student_t", 4.0)),
    TvARModel(LinearAR((Curve.const(0.4),)), noise=Noise("logistic")),
], ids=["two_state", "smooth5", "inar1", "setar", "ar1_t", "ar1_logistic"])
def test_numba_and_numpy_paths_agree(model):
    plan = SimulationPlan(60, 200, 9, model, burn_in=30)
    a = sample_triangular_array(plan, use_numba=True)
    b = sample_triangular_array(plan, use_numba=False)
    if a.dtype.kind == "f":
        assert np.abs(a - b).max() <= 1e-12
    else:
        assert np.array_equal(a, b)


def test_disable_flag_selects_numpy_in_subprocess():
    code = ("from locstat import _accel; from locstat.simulate import *; from locstat.zoo import two_state;"
            "import numpy as np;"
            "p = sample_triangular_array(SimulationPlan(20, 50, 4, two_state()));"
            "print(_accel.backend_name(), int(p.sum()))")
    env = dict(os.environ, LOCSTAT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, total = out.stdout.split()
    assert name == "numpy"
    ref = sample_triangular_array(SimulationPlan(20, 50, 4, two_state()))
    assert int(total) == int(ref.sum())


def test_constant_family_marginals_are_stationary():
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(3), size=3)
    paths = sample_triangular_array(SimulationPlan(30, 40_000, 1, constant_family(P)))
    emp = empirical_marginals(paths, 3)
    pi = stationary_vector(P)
    assert np.abs(emp - pi).sum(axis=1).max() <= 3 * np.sqrt(3 / 40_000)


def test_testbed_marginals_match_forward_recursion():
    fam = two_state()
    paths = sample_triangular_array(SimulationPlan(100, 100_000, 5, fam))
    emp = empirical_marginals(paths, 2)
    exact = np.array([m.weights for m in forward_marginals(fam, 100)])
    assert np.abs(emp - exact).sum(axis=1).max() <= 0.01


def test_rank_one_chain_is_uncorrelated():
    nu = np.array([0.2, 0.5, 0.3])
    path = sample_stationary_chain(constant_family(np.tile(nu, (3, 1))), 0.5, 50_000, seed=2)[0].astype(float)
    r = np.corrcoef(path[:-1], path[1:])[0, 1]
    assert abs(r) <= 3 / np.sqrt(path.size)


def test_testbed_stationary_mean():
    fam = two_state()
    path = sample_stationary_chain(fam, 0.3, 100_000, seed=4)[0]
    pi = stationary_vector(fam.matrix(0.3))
    # lag-1 correlation 1 - a - b = 0.14 inflates the variance of the mean
    se = np.sqrt(pi[0] * pi[1] / path.size * (1 + 0.14) / (1 - 0.14))
    assert abs(path.mean() - pi[1]) <= 4 * se


def test_ar1_stationary_variance():
    model = TvARModel(LinearAR((Curve.const(0.5),)))
    x = sample_stationary_chain(model, 0.5, 2000, seed=6, replicates=100)
    v = x.var()
    # 100 chains of 2000 with rho = 0.5: se of the variance is roughly 4/3 sqrt(2 (1+rho^2)/(1-rho^2) / N)
    se = 4 / 3 * np.sqrt(2 * (1 + 0.25) / (1 - 0.25) / x.size)
    assert abs(v - 4 / 3) <= 4 * se


def test_inar_transitions_match_rows():
    model = inar1_example()
    N = 40
    rows = inar_rows(model, 0.3, 0, N)[0][0]
    draws = sample_transitions(model, 0.3, 2, 200_000, seed=1)
    freq = np.bincount(np.minimum(draws, N), minlength=N + 1) / draws.size
    assert np.abs(freq - rows[2]).sum() <= 0.01


def test_tvar_transitions_are_gaussian():
    from scipy import stats

    model = TvARModel(LinearAR((Curve.poly(0.2, 0.4),)), Curve.const(0.7))
    y = sample_transitions(model, 0.5, 1.5, 50_000, seed=3)
    assert stats.kstest(y, "norm", args=(0.4 * 1.5, 0.7)).pvalue > 1e-4


def test_burn_in_rule():
    assert burn_in_for(0.5, 1e-9) >= np.log(1e-9) / np.log(0.5)
    assert burn_in_for(0.0) >= 20


def test_binary_and_csv_round_trip(tmp_path):
    paths = sample_triangular_array(SimulationPlan(10, 4, 0, two_state()))
    f = tmp_path / "p.lsmc"
    write_binary(f, paths)
    assert np.array_equal(read_binary(f), paths)
    text = paths_to_csv(paths)
    lines = text.strip().split("\n")
    assert lines[0] == "replicate,t,state"
    assert len(lines) == 1 + paths.size
    xs = np.random.default_rng(0).normal(size=(3, 6))
    write_binary(f, xs)
    assert np.array_equal(read_binary(f, "f8"), xs)
