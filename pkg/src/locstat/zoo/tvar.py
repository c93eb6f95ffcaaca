"""Time-varying nonlinear autoregressions, discretized on a bin grid.

The transition density is ``q(u, x, y) = s(u) f(z)`` with ``s = 1/sigma`` and
``z = (y - m(u, x)) s(u)``. Its ``u``-derivatives are assembled from the
Leibniz rule in ``s`` and Faa di Bruno for ``f(z(u))``; they are polynomials
in ``y - m`` of degree at most ``s`` times ``f^(s)(z)``, exactly as for the
continuous model, and are then integrated over each bin.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Optional, Tuple

import numpy as np

from ..measure import ContractViolation, KernelFamily, StateSpace
from .curves import Curve, ModelInvariantViolated, faa_di_bruno_all, reciprocal_bundle
from .noise import MAX_ORDER, Noise
from .porder import POrderKernel, p_order_vectorize


class TruncationTooCoarse(ContractViolation):
    pass


# -- regression functions --------------------------------------------------

@dataclass(frozen=True)
class LinearAR:
    """``m(u, x) = c(u) + sum_i a_i(u) x_{t-i}``; ``coefs[0]`` multiplies the most recent lag."""

    coefs: Tuple[Curve, ...]
    intercept: Optional[Curve] = None

    @property
    def p(self):
        return len(self.coefs)

    def derivs(self, u, X, k):
        """``[m, m', ..., m^(k)]`` at sources ``X`` of shape ``(n, p)`` (last column most recent)."""
        out = []
        for ell in range(k + 1):
            v = np.zeros(X.shape[0])
            for i, a in enumerate(self.coefs):
                v = v + a.deriv(u, ell) * X[:, -1 - i]
            if self.intercept is not None:
                v = v + self.intercept.deriv(u, ell)
            out.append(v)
        return out

    def beta(self, u):
        return float(sum(abs(a(u)) for a in self.coefs))

    def intercept_bound(self, u):
        return 0.0 if self.intercept is None else abs(self.intercept(u))

    def simulation_params(self):
        return "linear", self.coefs, self.intercept


@dataclass(frozen=True)
class ThresholdAR:
    """``m(u, x) = a1(u) max(x - r, 0) + a2(u) max(r - x, 0) + c(u)`` (regions fixed in ``u``).

    Evaluated exactly at each source point; no smoothing at the threshold.
    """

    a1: Curve
    a2: Curve
    threshold: float = 0.0
    intercept: Optional[Curve] = None

    p = 1

    def derivs(self, u, X, k):
        x = X[:, -1] - self.threshold
        pos, neg = np.maximum(x, 0.0), np.maximum(-x, 0.0)
        out = []
        for ell in range(k + 1):
            v = self.a1.deriv(u, ell) * pos + self.a2.deriv(u, ell) * neg
            if self.intercept is not None:
                v = v + self.intercept.deriv(u, ell)
            out.append(v)
        return out

    def beta(self, u):
        return float(max(abs(self.a1(u)), abs(self.a2(u))))

    def intercept_bound(self, u):
        c = 0.0 if self.intercept is None else abs(self.intercept(u))
        return c + self.beta(u) * abs(self.threshold)


@dataclass(frozen=True, eq=False)
class TvARModel:
    m_fun: object
    sigma: Curve = Curve.const(1.0)
    noise: Noise = Noise()
    d0: float = 4.0
    q: float = 1.0

    @property
    def p(self):
        return self.m_fun.p

    def d1(self, k):
        return self.d0 - self.q * k


@dataclass(frozen=True)
class Discretizer:
    """Equal-width bins on ``[-L, L]``; ``quadrature`` is ``"gauss5"`` or ``"cdf"``."""

    L: float = 8.0
    bins: int = 201
    quadrature: str = "gauss5"
    nodes: int = 5

    def __post_init__(self):
        if self.L <= 0 or self.bins < 2:
            raise ContractViolation("discretizer needs L > 0 and at least 2 bins")
        if self.quadrature not in ("gauss5", "cdf"):
            raise ContractViolation("quadrature must be 'gauss5' or 'cdf'")

    @property
    def edges(self):
        return np.linspace(-self.L, self.L, self.bins + 1)

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def width(self):
        return 2 * self.L / self.bins

    def gl_nodes(self):
        t, w = np.polynomial.legendre.leggauss(self.nodes)
        e = self.edges
        half = 0.5 * (e[1:] - e[:-1])
        mid = 0.5 * (e[1:] + e[:-1])
        return mid[:, None] + half[:, None] * t[None, :], half[:, None] * w[None, :]

    def space(self):
        c = self.centers
        return StateSpace(tuple(range(self.bins)), c)


# -- kernel assembly -------------------------------------------------------

def _z_bundle(ym, mder, sder, k):
    """Derivatives of ``z = (y - m) s``; ``ym = y - m`` broadcast against source arrays."""
    out = []
    for r in range(k + 1):
        acc = ym * sder[r]
        for i in range(1, r + 1):
            acc = acc - comb(r, i) * mder[i] * sder[r - i]
        out.append(acc)
    return out


def _density_bundle(noise, ym, mder, sder, k):
    """``[q, q', ..., q^(k)]`` of ``q = s f((y - m) s)``."""
    z = _z_bundle(ym, mder, sder, k)
    fz = faa_di_bruno_all(noise.derivs(z[0], k), z, k)
    return [sum(comb(ell, r) * sder[ell - r] * fz[r] for r in range(ell + 1)) for ell in range(k + 1)]


def _cdf_bundle(noise, ym, mder, sder, k):
    """``[F(z), d/du F(z), ...]`` at a fixed level ``y`` (``ym = y - m``)."""
    z = _z_bundle(ym, mder, sder, k)
    outer = [noise.cdf(z[0])] + noise.derivs(z[0], max(k - 1, 0))[:k]
    return faa_di_bruno_all(outer, z, k)


def tvar_rows(model: TvARModel, disc: Discretizer, sources, u, k, chunk=64):
    """Binned transition rows and their derivatives.

    Returns ``(rows, absorbed)`` where ``rows`` has shape ``(k+1, n_src, bins)``
    and ``absorbed`` is the per-source mass outside ``[-L, L]`` folded into the
    edge bins.
    """
    if k > MAX_ORDER:
        raise ContractViolation("TvAR derivative bundles are implemented for k <= 3")
    sig = [model.sigma.deriv(u, ell) for ell in range(k + 1)]
    if sig[0] <= 0:
        raise ModelInvariantViolated("sigma(%g) = %g is not positive" % (u, sig[0]))
    sder = reciprocal_bundle(sig, k)
    n_src = sources.shape[0]
    nb = disc.bins
    rows = np.zeros((k + 1, n_src, nb))
    absorbed = np.zeros(n_src)
    edges = disc.edges
    if disc.quadrature == "gauss5":
        y, w = disc.gl_nodes()
    for lo in range(0, n_src, chunk):
        X = sources[lo:lo + chunk]
        mder = [md[:, None] for md in model.m_fun.derivs(u, X, k)]
        if disc.quadrature == "cdf":
            Fe = _cdf_bundle(model.noise, edges[None, :] - mder[0], mder, sder, k)
            for ell in range(k + 1):
                blk = Fe[ell][:, 1:] - Fe[ell][:, :-1]
                lt = Fe[ell][:, 0]
                rt = (1.0 if ell == 0 else 0.0) - Fe[ell][:, -1]
                blk[:, 0] += lt
                blk[:, -1] += rt
                rows[ell, lo:lo + chunk] = blk
                if ell == 0:
                    absorbed[lo:lo + chunk] = lt + rt
            continue
        md3 = [md[:, :, None] for md in mder]
        q = _density_bundle(model.noise, y[None, :, :] - md3[0], md3, sder, k)
        left = _cdf_bundle(model.noise, -disc.L - mder[0][:, 0], [md[:, 0] for md in mder], sder, k)
        for ell in range(k + 1):
            blk = (q[ell] * w[None, :, :]).sum(axis=2)
            blk[:, 0] += left[ell]
            rt = (1.0 if ell == 0 else 0.0) - blk.sum(axis=1)
            if ell == 0:
                # right-tail mass goes to the last bin; quadrature overshoot on
                # coarse bins is taken from the modal bin, at every order
                fix = np.where(blk[:, -1] + rt >= 0, nb - 1, blk.argmax(axis=1))
                absorbed[lo:lo + chunk] = left[0] + np.maximum(rt, 0.0)
            blk[np.arange(blk.shape[0]), fix] += rt
            rows[ell, lo:lo + chunk] = blk
    return rows, absorbed


def check_tvar_model(model: TvARModel, k, grid=101):
    """Noise, scale and contraction checks on a ``u``-grid; raises :class:`ModelInvariantViolated`."""
    us = np.linspace(0, 1, grid)
    sig = np.array([model.sigma(u) for u in us])
    if sig.min() <= 0:
        raise ModelInvariantViolated("sigma is not bounded away from 0 (min %.3g)" % sig.min())
    beta = max(model.m_fun.beta(u) for u in us)
    if beta >= 1:
        raise ModelInvariantViolated("sup_u sum beta_i = %.4g >= 1" % beta)
    if model.d0 - model.q * k <= 0:
        raise ModelInvariantViolated("d0 - q k = %g must be positive" % (model.d0 - model.q * k))
    moments = {}
    for s in range(k + 1):
        power = model.d0 + (1 - model.q) * s
        val = model.noise.moment_integral(power, s)
        moments[s] = val
        if not np.isfinite(val):
            raise ModelInvariantViolated("noise moment int |y|^%g |f^(%d)| diverges" % (power, s))
    return {"sigma_minus": float(sig.min()), "beta_sup": float(beta), "moments": moments}


def _source_grid(disc, p):
    c = disc.centers
    idx = np.indices((disc.bins,) * p).reshape(p, -1).T
    return c[idx]


def tvar_porder_kernel(model: TvARModel, disc: Discretizer, k=2, absorb_tol=1e-6) -> POrderKernel:
    """p-order binned kernel with cached rows per ``u``."""
    check_tvar_model(model, k)
    sources = _source_grid(disc, model.p)

    @lru_cache(maxsize=16)
    def at(u):
        rows, absorbed = tvar_rows(model, disc, sources, u, k)
        rows.setflags(write=False)
        return rows, absorbed

    phi = 1.0 + np.abs(disc.centers)
    return POrderKernel(disc.space(), model.p, k, lambda u: at(float(u))[0][0],
                        lambda u, ell: at(float(u))[0][ell], phi=phi, d1=model.d1(k), q=model.q,
                        name="tvar", meta={"model": model, "disc": disc, "absorbed_at": at,
                                           "absorb_tol": absorb_tol})


def absorption_report(fam: KernelFamily, grid=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Worst row absorption and worst stationary-weighted absorption over a ``u``-grid."""
    from ..oracle import stationary_vector

    at = fam.meta["absorbed_at"]
    m = fam.meta.get("base_size")
    worst_row, worst_pi = 0.0, 0.0
    for u in grid:
        absorbed = at(float(u))[1]
        pi = stationary_vector(fam.matrix(u), check=False)
        worst_row = max(worst_row, float(absorbed.max()))
        worst_pi = max(worst_pi, float(pi @ absorbed))
    return {"row_max": worst_row, "stationary": worst_pi}


def build_tvar(model: TvARModel, disc: Discretizer, k=2, absorb_tol=1e-6) -> KernelFamily:
    """Binned TvAR family; ``p >= 2`` is vectorized on the ``p``-fold product grid.

    Raises
    ------
    ModelInvariantViolated
        If sigma, the drift coefficients or the noise moments fail their checks.
    TruncationTooCoarse
        If the stationary mass absorbed at the boundary exceeds ``absorb_tol``.
    """
    R = tvar_porder_kernel(model, disc, k, absorb_tol)
    fam = p_order_vectorize(R)
    fam.meta.update(R.meta)
    rep = absorption_report(fam)
    fam.meta["absorption"] = rep
    if rep["stationary"] > absorb_tol:
        raise TruncationTooCoarse("stationary boundary mass %.3e exceeds %.1e; widen L" %
                                  (rep["stationary"], absorb_tol))
    return fam


def setar_example(L=8.0, bins=801, k=3, quadrature="gauss5"):
    """``m = (0.3 + 0.2u) max(x, 0) - 0.4 max(-x, 0)``, Gaussian noise."""
    m_fun = ThresholdAR(Curve.poly(0.3, 0.2), Curve.const(-0.4))
    return build_tvar(TvARModel(m_fun, d0=4.0, q=1.0), Discretizer(L, bins, quadrature), k)


def ar1_example(a=0.5, L=8.0, bins=201, k=2, noise=None, sigma=None, quadrature="gauss5"):
    coef = a if isinstance(a, Curve) else Curve.const(a)
    model = TvARModel(LinearAR((coef,)), sigma or Curve.const(1.0), noise or Noise())
    return build_tvar(model, Discretizer(L, bins, quadrature), k)
