"""Local polynomial estimation of ``u -> psi_f(u) = int f d pi_{u,j}`` from triangular arrays.

The estimator follows the usual weighted least-squares form with design
rows ``v_t(u) = ((t/n - u)^i / (b^i i!))_{i<k}`` and blocks
``Z_{n,t} = (X_{n,t}, ..., X_{n,t+j-1})``, ``t = 1..n-j+1``. Because the fit
is linear in the data, each ``(n, u, b)`` reduces to a weight matrix that
is reused across replicates.
"""

import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np
from scipy import integrate, linalg

from .measure import ContractViolation, KernelFamily
from .oracle import forward_marginals, j_dim_array, stationary_vector

COND_CAP = 1e10
RIDGE = 1e-12
BIAS_FLOOR = 1e-13


class DesignSingular(ContractViolation):
    """Too few points in the kernel window, or ``D(u)`` not positive definite."""


class IllConditioned(UserWarning):
    """``cond(D(u))`` exceeds the cap; a ridge was added to the diagonal."""


def epanechnikov(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1, 0.75 * (1 - x * x), 0.0)


def triangular(x):
    x = np.asarray(x, dtype=float)
    return np.clip(1 - np.abs(x), 0.0, None)


def uniform(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1, 0.5, 0.0)


KERNELS = {"epanechnikov": epanechnikov, "triangular": triangular, "uniform": uniform}


def _resolve_kernel(K):
    if callable(K):
        mass = integrate.quad(K, -1, 1, epsabs=1e-13, epsrel=1e-13, points=[0.0])[0]
        if abs(mass - 1) > 1e-10:
            raise ContractViolation("kernel integrates to %.12g on [-1, 1], not 1" % mass)
        return K
    try:
        return KERNELS[K]
    except KeyError:
        raise ContractViolation("unknown kernel %r (choose from %s)" % (K, ", ".join(KERNELS))) from None


@dataclass(frozen=True, eq=False)
class LocPolyConfig:
    """``k`` is the number of coefficients (fit degree ``k-1``); ``f`` maps an ``(N, j)`` block array to ``N`` values."""

    k: int = 2
    bandwidth: float = 0.1
    kernel_K: object = "epanechnikov"
    j: int = 1
    f: Optional[Callable] = None

    def __post_init__(self):
        if self.k < 1 or self.j < 1:
            raise ContractViolation("k and j must be positive")
        if not 0 < self.bandwidth < 1:
            raise ContractViolation("bandwidth must lie in (0, 1)")
        object.__setattr__(self, "kernel_K", _resolve_kernel(self.kernel_K))

    def check_n(self, n):
        """Raise if ``bandwidth * n < 2k``."""
        if self.bandwidth * n < 2 * self.k:
            raise ContractViolation("bandwidth*n = %g is below 2k = %d" % (self.bandwidth * n, 2 * self.k))

    def with_bandwidth(self, b):
        return LocPolyConfig(self.k, b, self.kernel_K, self.j, self.f)

    def func(self):
        return self.f if self.f is not None else (lambda Z: Z[:, 0])


@dataclass(frozen=True, eq=False)
class LocPolyFit:
    u: float
    H_hat: np.ndarray
    D: np.ndarray
    condition_number: float
    bandwidth: float
    boundary: bool = False
    ridge: bool = False
    n_terms: int = 0

    @property
    def psi(self):
        return float(self.H_hat[0])

    def derivative(self, ell):
        """``psi^(ell)(u)`` estimate, ``H[ell] / b^ell``."""
        return float(self.H_hat[ell] / self.bandwidth ** ell)

    @property
    def flag(self):
        return "boundary" if self.boundary else ("ridge" if self.ridge else "")


def design_row(t, n, u, b, k):
    """``v_t(u)``: entries ``((t/n - u)/b)^i / i!`` for ``i = 0..k-1``."""
    x = (np.asarray(t, dtype=float) / n - u) / b
    i = np.arange(k)
    fact = np.array([factorial(a) for a in range(k)], dtype=float)
    return np.power.outer(x, i) / fact if np.ndim(x) else x ** i / fact


def _design(n, u, cfg, n_terms):
    t = np.arange(1, n_terms + 1)
    b = cfg.bandwidth
    w = cfg.kernel_K((t / n - u) / b) / b
    v = design_row(t, n, u, b, cfg.k)  # (T, k)
    return t, w, v


def local_weights(n, u, cfg: LocPolyConfig, n_terms=None):
    """Return ``(W, D, cond, ridge)`` with ``H_hat = W @ y`` for data ``y_1..y_T``, ``T = n - j + 1``."""
    T = n - cfg.j + 1 if n_terms is None else n_terms
    if T < 1:
        raise ContractViolation("no blocks: n=%d, j=%d" % (n, cfg.j))
    _, w, v = _design(n, u, cfg, T)
    if np.count_nonzero(w > 0) < cfg.k:
        raise DesignSingular("only %d points with positive weight at u=%g (need %d); bandwidth too small for n"
                             % (np.count_nonzero(w > 0), u, cfg.k))
    D = (v * w[:, None]).T @ v / T
    B = (v * w[:, None]).T / T  # N_hat = B @ y
    cond = float(np.linalg.cond(D))
    ridge = False
    if not np.isfinite(cond) or cond > COND_CAP:
        warnings.warn("cond(D)=%.3g at u=%g exceeds %.0e; adding ridge %.0e" % (cond, u, COND_CAP, RIDGE),
                      IllConditioned, stacklevel=3)
        D = D + RIDGE * np.eye(cfg.k)
        ridge = True
    try:
        c = linalg.cho_factor(D, lower=True)
    except linalg.LinAlgError:
        raise DesignSingular("D(u) is not positive definite at u=%g" % u) from None
    return linalg.cho_solve(c, B), D, cond, ridge


def fit_local_poly(data, u, cfg: LocPolyConfig, n=None):
    """Fit at ``u`` from ``data``: a ``(t, y)`` pair of arrays with ``t = 1..T``, or a plain ``y`` vector.

    ``n`` defaults to ``T + j - 1``.
    """
    if isinstance(data, tuple) and len(data) == 2:
        t, y = np.asarray(data[0]), np.asarray(data[1], dtype=float)
        if not np.array_equal(t, np.arange(1, t.shape[0] + 1)):
            order = np.argsort(t)
            t, y = t[order], y[order]
            if not np.array_equal(t, np.arange(1, t.shape[0] + 1)):
                raise ContractViolation("time indices must be exactly 1..T")
    else:
        y = np.asarray(data, dtype=float)
    T = y.shape[0]
    n = T + cfg.j - 1 if n is None else n
    W, D, cond, ridge = local_weights(n, u, cfg, T)
    H = W @ y
    _, w, v = _design(n, u, cfg, T)
    N_hat = (v * w[:, None]).T @ y / T
    if np.linalg.norm(D @ H - N_hat) > 1e-10 * max(np.linalg.norm(N_hat), 1e-300) + 1e-300:
        raise DesignSingular("normal equations not solved to 1e-10 at u=%g" % u)
    b = cfg.bandwidth
    return LocPolyFit(float(u), H, D, cond, b, bool(u < b or u > 1 - b), ridge, T)


# -- data preparation ------------------------------------------------------

def block_array(paths, j, embed=None):
    """Blocks ``Z_{n,t}``, ``t = 1..n-j+1``, from ``(R, n+1)`` paths: shape ``(R, n-j+1, j)``."""
    paths = np.atleast_2d(paths)
    vals = paths if embed is None else np.asarray(embed)[paths]
    n = paths.shape[1] - 1
    T = n - j + 1
    if T < 1:
        raise ContractViolation("paths too short for j=%d" % j)
    return np.stack([vals[:, 1 + s:1 + s + T] for s in range(j)], axis=-1)


def functional_data(paths, f, j, embed=None):
    """``f(Z_{n,t})`` per replicate: shape ``(R, n-j+1)``."""
    Z = block_array(paths, j, embed)
    R, T = Z.shape[:2]
    return np.asarray(f(Z.reshape(R * T, *Z.shape[2:])), dtype=float).reshape(R, T)


def _embed(fam):
    vals = fam.space.values()
    if vals.ndim != 1:
        raise ContractViolation("locpoly functionals need scalar state embeddings")
    return vals


def functional_vector(fam: KernelFamily, f, j):
    """``f`` evaluated on every ``j``-tuple of states, lexicographic order."""
    vals = _embed(fam)
    m = vals.shape[0]
    idx = np.indices((m,) * j).reshape(j, -1).T
    return np.asarray(f(vals[idx]), dtype=float)


def psi_exact(fam: KernelFamily, f, j, us):
    """``psi_f(u) = sum_z pi_{u,j}(z) f(z)`` on a grid."""
    fv = functional_vector(fam, f, j)
    out = np.empty(len(us))
    for i, u in enumerate(us):
        P = fam.matrix(float(u))
        out[i] = j_dim_array(P, stationary_vector(P, check=False), j) @ fv
    return out


def nonstationary_means(fam: KernelFamily, f, j, n):
    """``E f(Z_{n,t})`` for ``t = 1..n-j+1`` from the exact forward laws."""
    fv = functional_vector(fam, f, j)
    marg = forward_marginals(fam, n)
    out = np.empty(n - j + 1)
    for t in range(1, n - j + 2):
        law = marg[t].weights
        for s in range(1, j):
            law = np.einsum("...i,ij->...ij", law, fam.matrix((t + s) / n))
        out[t - 1] = law.reshape(-1) @ fv
    return out


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- sweeps ----------------------------------------------------------------

@dataclass
class BiasSweep:
    rows: list
    slope: Optional[float]
    exact: bool
    dropped: list = field(default_factory=list)

    def to_json(self):
        return {"rows": [{"b": b, "bias": e} for b, e in self.rows], "slope": self.slope,
                "exact": self.exact, "dropped": self.dropped}


def bias_sweep_curve(psi, u, k, b_list, n=2000, kernel="epanechnikov", j=1):
    """Bias sweep for an arbitrary target curve ``psi`` fed as noiseless data ``y_t = psi(t/n)``."""
    t = np.arange(1, n - j + 2)
    y = np.asarray(psi(t / n), dtype=float)
    target = float(psi(np.array([u]))[0])
    rows, dropped = [], []
    for b in b_list:
        cfg = LocPolyConfig(k, b, kernel, j)
        cfg.check_n(n)
        bias = abs(fit_local_poly(y, u, cfg, n).psi - target)
        rows.append((float(b), float(bias)))
        if bias < BIAS_FLOOR:
            dropped.append(float(b))
    kept = [(b, e) for b, e in rows if b not in dropped]
    slope = _slope(*zip(*kept)) if len(kept) >= 2 else None
    return BiasSweep(rows, slope, len(kept) == 0, dropped)


def bias_sweep(fam: KernelFamily, f, j, u, k, b_list=(0.4, 0.2, 0.1, 0.05), n=2000, kernel="epanechnikov"):
    """Noiseless bias sweep with exact ``psi_f(t/n)`` as data; the slope of log-bias vs log-b estimates the order."""
    t = np.arange(1, n - j + 2)
    grid = np.concatenate([t / n, [u]])
    vals = psi_exact(fam, f, j, grid)
    lookup = dict(zip(grid.tolist(), vals.tolist()))
    return bias_sweep_curve(lambda us: np.array([lookup[float(x)] for x in us]), u, k, b_list, n, kernel, j)


def jackknife_var_se(x):
    """Jackknife standard error of the sample variance of ``x``."""
    x = np.asarray(x, dtype=float)
    R = x.shape[0]
    s, s2 = x.sum(), (x * x).sum()
    loo_mean = (s - x) / (R - 1)
    loo_var = ((s2 - x * x) - (R - 1) * loo_mean ** 2) / (R - 2)
    return float(np.sqrt((R - 1) / R * np.sum((loo_var - loo_var.mean()) ** 2)))


@dataclass
class VarianceSweep:
    rows: list  # (n, b, variance, jackknife se)
    slope: float

    def to_json(self):
        return {"rows": [{"n": n, "b": b, "variance": v, "jackknife_se": s} for n, b, v, s in self.rows],
                "slope": self.slope}


def bandwidth_rule(n, b0, n0, exponent=-0.2):
    """``b = b0 (n / n0)^exponent``."""
    return b0 * (n / n0) ** exponent


def estimates_from_paths(paths, u, cfg: LocPolyConfig, embed=None):
    """``psi_hat(u)`` for each replicate row of ``paths``."""
    Y = functional_data(paths, cfg.func(), cfg.j, embed)
    n = paths.shape[1] - 1
    W = local_weights(n, u, cfg)[0]
    return Y @ W[0]


def variance_sweep(fam, f, j, u, cfg: LocPolyConfig, n_list=(200, 400, 800, 1600), replicates=500, seed=0,
                   exponent=-0.2, use_numba=None):
    """Monte Carlo variance of ``psi_hat(u)`` with ``b = cfg.bandwidth (n/n_list[0])^exponent``.

    Returns the table and the slope of log-variance against log(nb).
    """
    from .simulate import SimulationPlan, sample_triangular_array

    embed = _embed(fam) if isinstance(fam, KernelFamily) else None
    rows = []
    for n in n_list:
        b = bandwidth_rule(n, cfg.bandwidth, n_list[0], exponent)
        c = LocPolyConfig(cfg.k, b, cfg.kernel_K, j, f)
        c.check_n(n)
        paths = sample_triangular_array(SimulationPlan(n, replicates, seed, fam), use_numba=use_numba)
        est = estimates_from_paths(paths, u, c, embed)
        rows.append((int(n), float(b), float(est.var(ddof=1)), jackknife_var_se(est)))
    nb = [n * b for n, b, _, _ in rows]
    v = [r[2] for r in rows]
    slope = _slope(nb, v) if min(v) > 0 else float("nan")
    return VarianceSweep(rows, slope)


@dataclass
class CovarianceCurve:
    u: np.ndarray
    estimate: np.ndarray
    mc_se: np.ndarray
    exact: Optional[np.ndarray]

    def to_csv(self):
        lines = ["u,cov_hat,mc_se,cov_exact"]
        for i, u in enumerate(self.u):
            ex = "" if self.exact is None else repr(float(self.exact[i]))
            lines.append("%r,%r,%r,%s" % (float(u), float(self.estimate[i]), float(self.mc_se[i]), ex))
        return "\n".join(lines) + "\n"


def covariance_curve(fam, u_grid, cfg: LocPolyConfig, data, embed=None):
    """Estimate ``u -> Cov(X_0(u), X_1(u))`` from ``(R, n+1)`` paths.

    Uses the fit of ``x1 x2`` on pairs minus the square of the fit of ``x``
    on single states, per replicate; the exact curve is overlaid for finite
    families.
    """
    if embed is None and isinstance(fam, KernelFamily):
        embed = _embed(fam)
    data = np.atleast_2d(data)
    n = data.shape[1] - 1
    prod = functional_data(data, lambda Z: Z[:, 0] * Z[:, 1], 2, embed)
    single = functional_data(data, lambda Z: Z[:, 0], 1, embed)
    c2 = LocPolyConfig(cfg.k, cfg.bandwidth, cfg.kernel_K, 2)
    c1 = LocPolyConfig(cfg.k, cfg.bandwidth, cfg.kernel_K, 1)
    us = np.asarray(u_grid, dtype=float)
    est = np.empty((data.shape[0], us.shape[0]))
    for i, u in enumerate(us):
        m2 = prod @ local_weights(n, u, c2)[0][0]
        m1 = single @ local_weights(n, u, c1)[0][0]
        est[:, i] = m2 - m1 ** 2
    R = est.shape[0]
    se = est.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(us.shape[0])
    exact = None
    if isinstance(fam, KernelFamily):
        exact = psi_exact(fam, lambda Z: Z[:, 0] * Z[:, 1], 2, us) - psi_exact(fam, lambda Z: Z[:, 0], 1, us) ** 2
    return CovarianceCurve(us, est.mean(axis=0), se, exact)


def stationarity_deviation(fam: KernelFamily, f, j, u, cfg: LocPolyConfig, n_list=(100, 200, 400, 800)):
    """``|psi_hat(u)`` from ``E f(Z_{n,t})`` minus ``psi_hat(u)`` from ``psi_f(t/n)|`` per ``n``.

    Returns rows ``(n, deviation, n * deviation)``.
    """
    rows = []
    for n in n_list:
        c = LocPolyConfig(cfg.k, cfg.bandwidth, cfg.kernel_K, j, f)
        c.check_n(n)
        W = local_weights(n, u, c)[0][0]
        ideal = psi_exact(fam, f, j, np.arange(1, n - j + 2) / n)
        actual = nonstationary_means(fam, f, j, n)
        dev = abs(float(W @ (actual - ideal)))
        rows.append((int(n), dev, n * dev))
    return rows
