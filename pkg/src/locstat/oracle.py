"""Exact computations on finite kernel families.

Invariant laws, the zero-mass resolvent, the derivative recursion for
``u -> pi_u``, Taylor remainders, ``j``-dimensional laws and exact
forward marginals of the triangular array.
"""

import csv
import io
from dataclasses import dataclass
from math import comb, factorial
from typing import List

import numpy as np

from .measure import (
    ContractViolation,
    KernelFamily,
    StateSpace,
    TransitionKernel,
    WeightFunction,
    WeightedSignedMeasure,
    vnorm,
)

SIMPLE_EIG_TOL = 1e-8
DEFAULT_PRODUCT_CAP = 10**6
DEFAULT_DENSE_CAP = 5000


class NonUniqueInvariant(ContractViolation):
    """Eigenvalue 1 of the kernel is not simple."""


class StencilOutOfDomain(ContractViolation):
    pass


class ProductSpaceTooLarge(ContractViolation):
    pass


# -- invariant measures ----------------------------------------------------

def _solve_stationary(P):
    m = P.shape[0]
    A = np.eye(m) - P + 1.0  # I - P + 1 1'
    pi = np.linalg.solve(A.T, np.ones(m))
    # one power step polishes the fixed-point residual
    pi = pi @ P
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    return pi / pi.sum()


def check_unique(P, tol=SIMPLE_EIG_TOL):
    ev = np.linalg.eigvals(P)
    n_one = int(np.sum(np.abs(ev - 1.0) < tol))
    if n_one > 1:
        raise NonUniqueInvariant("eigenvalue 1 has multiplicity %d" % n_one)


def stationary_vector(P, check=True):
    """Invariant probability of a row-stochastic array (no wrapping)."""
    P = np.asarray(P, dtype=float)
    if check:
        check_unique(P)
    try:
        pi = _solve_stationary(P)
    except np.linalg.LinAlgError as exc:
        raise NonUniqueInvariant(str(exc)) from exc
    if np.any(pi < -1e-10) or not np.all(np.isfinite(pi)):
        raise NonUniqueInvariant("stationary solve returned a non-probability vector")
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def invariant_measure(P: TransitionKernel, check=True) -> WeightedSignedMeasure:
    """Unique probability ``pi`` with ``pi P = pi``.

    Raises
    ------
    NonUniqueInvariant
        If eigenvalue 1 is not simple (to within ``1e-8``).
    """
    return WeightedSignedMeasure(stationary_vector(P.matrix, check=check), P.space)


# -- fundamental matrix ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    Z: np.ndarray
    pi: np.ndarray
    u: float = float("nan")

    @classmethod
    def build(cls, P, pi=None, u=float("nan")):
        P = np.asarray(P, dtype=float)
        if pi is None:
            pi = stationary_vector(P)
        m = P.shape[0]
        Z = np.linalg.inv(np.eye(m) - P + np.outer(np.ones(m), pi))
        Z.setflags(write=False)
        return cls(Z, np.asarray(pi), u)


def zero_mass_resolve(Z: FundamentalMatrix, b, tol=1e-9) -> WeightedSignedMeasure:
    """Solve ``x (I - Q) = b`` on zero-mass measures; ``x`` has zero mass."""
    w = b.weights if isinstance(b, WeightedSignedMeasure) else np.asarray(b, float)
    scale = max(1.0, float(np.abs(w).sum()))
    if abs(w.sum()) > tol * scale:
        raise ContractViolation("zero_mass_resolve needs a zero-mass right-hand side (mass %.3e)" % w.sum())
    x = w @ Z.Z
    if isinstance(b, WeightedSignedMeasure):
        return WeightedSignedMeasure(x, b.space)
    return x


# -- derivative recursion --------------------------------------------------

@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    u: float
    orders: tuple

    @property
    def k(self):
        return len(self.orders) - 1

    def array(self):
        return np.vstack([o.weights for o in self.orders])

    def to_json(self, residuals=None):
        return {
            "u": self.u,
            "orders": [[float(x) for x in o.weights] for o in self.orders],
            "residuals": dict(residuals or {}),
        }


def derivative_arrays(P, derivs, k, pi=None):
    """Core recursion on raw arrays.

    ``derivs[s]`` is the entrywise ``s``-th derivative of the kernel for
    ``s = 1..k``. Returns ``(k+1, m)`` array ``[pi, pi', ..., pi^(k)]``.
    """
    if pi is None:
        pi = stationary_vector(P)
    Z = FundamentalMatrix.build(P, pi)
    out = np.zeros((k + 1, P.shape[0]))
    out[0] = pi
    for ell in range(1, k + 1):
        rhs = np.zeros(P.shape[0])
        for s in range(1, ell + 1):
            rhs += comb(ell, s) * (out[ell - s] @ derivs[s])
        out[ell] = rhs @ Z.Z
    return out


def derivative_recursion(fam: KernelFamily, u: float, k: int) -> DerivativeBundle:
    """``[pi_u, pi_u', ..., pi_u^(k)]`` from the resolvent recursion

    ``f^(l) = sum_{s=1}^{l} C(l, s) (I - T_u)^{-1} T_u^(s) f^(l-s)``
    with ``T^(s) mu = mu dP^(s)`` and the resolvent realized by the
    fundamental matrix.
    """
    if k > fam.order_k:
        raise ContractViolation("family supplies derivatives up to %d, asked %d" % (fam.order_k, k))
    P = fam.matrix(u)
    pi = stationary_vector(P)
    derivs = [None] + [fam.deriv(u, s) for s in range(1, k + 1)]
    arr = derivative_arrays(P, derivs, k, pi)
    return DerivativeBundle(float(u), tuple(WeightedSignedMeasure(a, fam.space) for a in arr))


def neumann_resolve(P, b, tol=1e-14, max_iter=100000):
    """Slow cross-check of the resolvent: ``sum_n b P^n`` for zero-mass ``b``."""
    acc = np.array(b, dtype=float)
    term = acc.copy()
    for _ in range(max_iter):
        term = term @ P
        acc += term
        if np.abs(term).sum() < tol:
            return acc
    raise RuntimeError("Neumann series did not converge")


# -- finite-difference oracle ----------------------------------------------

_STENCILS = {
    # (offsets in units of h, weights, divisor exponent)
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}

FD_STEP = {1: 1e-3, 2: 1e-3, 3: 5e-3, 4: 1e-2}


def _stencil(f, u, ell, h):
    offs, wts = _STENCILS[ell]
    return sum(w * f(u + o * h) for o, w in zip(offs, wts)) / h ** ell


def stencil_reach(ell):
    return max(abs(o) for o in _STENCILS[ell][0])


def fd_derivative_oracle(fam: KernelFamily, u: float, ell: int, h=None) -> WeightedSignedMeasure:
    """Central differences of exact invariant laws, Richardson-extrapolated once.

    Independent of :func:`derivative_recursion`: only ``fam.matrix`` is used.
    """
    if ell == 0:
        return WeightedSignedMeasure(stationary_vector(fam.matrix(u)), fam.space)
    if ell not in _STENCILS:
        raise ContractViolation("fd oracle supports orders 1..4")
    h = FD_STEP[ell] if h is None else float(h)
    if h <= 0:
        raise ContractViolation("step must be positive")
    reach = stencil_reach(ell) * h
    if u - reach < -1e-15 or u + reach > 1 + 1e-15:
        raise StencilOutOfDomain("stencil [%g, %g] leaves [0, 1]" % (u - reach, u + reach))
    cache = {}

    def pi_at(v):
        key = round(v, 15)
        if key not in cache:
            cache[key] = stationary_vector(fam.matrix(v), check=False)
        return cache[key]

    d1 = _stencil(pi_at, u, ell, h)
    d2 = _stencil(pi_at, u, ell, h / 2)
    return WeightedSignedMeasure((4.0 * d2 - d1) / 3.0, fam.space)


# -- Taylor remainder ------------------------------------------------------

def derivative_sup(fam, k, grid=101, extra=()):
    """``max_v ||f^(k)(v)||_{V0}`` over an equispaced grid plus extra points."""
    pts = np.unique(np.concatenate([np.linspace(0.0, 1.0, grid), np.asarray(extra, float)]))
    V0 = fam.V0
    best = 0.0
    for v in pts:
        arr = derivative_recursion(fam, v, k).orders[k]
        best = max(best, vnorm(arr, V0))
    return best


def taylor_remainder_check(fam: KernelFamily, u: float, h: float, k: int, grid=101, M=None):
    """Return ``(remainder_norm, bound)`` for the order-``k`` Taylor-Lagrange inequality.

    ``remainder = ||pi_{u+h} - pi_u - sum_{l=1}^{k-1} pi_u^(l) h^l / l!||_{V0}``
    and ``bound = M |h|^k / k!`` with ``M`` the largest ``||pi^(k)||_{V0}`` over
    a ``grid``-point mesh of [0, 1] refined by 21 points between ``u`` and ``u+h``.
    """
    if not (0 <= u <= 1 and 0 <= u + h <= 1):
        raise ContractViolation("u and u+h must lie in [0, 1]")
    bundle = derivative_recursion(fam, u, max(k - 1, 0)).array()
    target = stationary_vector(fam.matrix(u + h))
    approx = bundle[0].copy()
    for ell in range(1, k):
        approx += bundle[ell] * h ** ell / factorial(ell)
    remainder = vnorm(target - approx, fam.V0)
    if M is None:
        M = derivative_sup(fam, k, grid, extra=np.linspace(min(u, u + h), max(u, u + h), 21))
    return remainder, M * abs(h) ** k / factorial(k)


def taylor_sweep(fam: KernelFamily, u_grid, h_list, k_max=3, grid=201):
    """All Taylor-Lagrange checks on a ``(u, +-h, k)`` grid from one set of bundles.

    Bundles of order ``k_max`` are computed once per point of a ``grid``-point
    mesh of [0, 1] joined with every ``u`` and ``u +- h``; ``M_k`` is their
    largest ``k``-th derivative norm. Pairs leaving [0, 1] are skipped.

    Returns
    -------
    rows : list of tuple
        ``(k, u, h, remainder, bound)``.
    M : dict
        ``k -> M_k``.
    """
    pts = {round(float(v), 12) for v in np.linspace(0.0, 1.0, grid)}
    for u in u_grid:
        for h in h_list:
            pts.update(round(float(u + s * h), 12) for s in (0, 1, -1) if 0 <= u + s * h <= 1)
    bundles = {v: derivative_recursion(fam, v, k_max).array() for v in sorted(pts)}
    V0 = fam.V0
    M = {k: max(vnorm(b[k], V0) for b in bundles.values()) for k in range(1, k_max + 1)}
    rows = []
    for k in range(1, k_max + 1):
        for u in u_grid:
            base = bundles[round(float(u), 12)]
            for h in h_list:
                for hs in (h, -h):
                    if not 0 <= u + hs <= 1:
                        continue
                    approx = base[0].copy()
                    for ell in range(1, k):
                        approx += base[ell] * hs ** ell / factorial(ell)
                    rem = vnorm(bundles[round(float(u + hs), 12)][0] - approx, V0)
                    rows.append((k, float(u), float(hs), rem, M[k] * abs(hs) ** k / factorial(k)))
    return rows, M


# -- j-dimensional laws ----------------------------------------------------

def _check_product(m, j, cap):
    if m ** j > cap:
        raise ProductSpaceTooLarge("product space has %d > %d states" % (m ** j, cap))


def j_dim_array(P, pi, j):
    """Flattened ``pi(x1) P(x1,x2) ... P(x_{j-1},x_j)`` in lexicographic order."""
    law = np.asarray(pi, dtype=float)
    for _ in range(j - 1):
        law = np.einsum("...i,ij->...ij", law, P)
    return law.reshape(-1)


def j_dim_law(fam: KernelFamily, u: float, j: int, cap=DEFAULT_PRODUCT_CAP) -> WeightedSignedMeasure:
    """Stationary law of ``j`` consecutive states under ``Q_u``."""
    if j < 1:
        raise ContractViolation("j must be positive")
    _check_product(fam.size, j, cap)
    P = fam.matrix(u)
    pi = stationary_vector(P)
    space = fam.space if j == 1 else fam.space.power(j)
    return WeightedSignedMeasure(j_dim_array(P, pi, j), space)


def _shift_index(m, j):
    """For the vectorized kernel: target index of (x2..xj, y) for each (x, y)."""
    n = m ** j
    src = np.arange(n)
    tail = src % (m ** (j - 1)) if j > 1 else np.zeros(n, dtype=int)
    return tail[:, None] * m + np.arange(m)[None, :]


def vectorize_family(fam: KernelFamily, j: int, cap=DEFAULT_PRODUCT_CAP, dense_cap=DEFAULT_DENSE_CAP,
                     weight_family=None, name=None) -> KernelFamily:
    """Kernel of ``(X_t, ..., X_{t+j-1})`` on the product space (shift then append)."""
    m = fam.size
    if j == 1:
        return fam
    _check_product(m, j, cap)
    n = m ** j
    if n > dense_cap:
        raise ProductSpaceTooLarge("dense vectorized kernel needs %d <= %d states" % (n, dense_cap))
    last = np.arange(n) % m
    targets = _shift_index(m, j)
    rows = np.repeat(np.arange(n), m)
    cols = targets.reshape(-1)

    def lift(A):
        out = np.zeros((n, n))
        out[rows, cols] = A[last].reshape(-1)
        return out

    space = fam.space.power(j)
    if weight_family is None:
        # V_{s,j}(x) = sum_i V_s(x_i)
        idx = np.indices((m,) * j).reshape(j, -1)
        weight_family = [WeightFunction(V.values[idx].sum(axis=0), "sum_i %s" % V.description)
                         for V in fam.weight_family]
    return KernelFamily(space, fam.order_k, lambda u: lift(fam.matrix(u)),
                        lambda u, ell: lift(fam.deriv(u, ell)), weight_family=weight_family,
                        name=name or "%s^[%d]" % (fam.name, j), analytic=fam.analytic)


def j_dim_derivatives(fam: KernelFamily, u: float, j: int, k: int, cap=DEFAULT_PRODUCT_CAP,
                      dense_cap=DEFAULT_DENSE_CAP) -> DerivativeBundle:
    """Derivative bundle of ``u -> pi_{u,j}`` via the recursion on the vectorized chain."""
    if j == 1:
        return derivative_recursion(fam, u, k)
    return derivative_recursion(vectorize_family(fam, j, cap, dense_cap), u, k)


def j_dim_derivatives_leibniz(fam: KernelFamily, u: float, j: int, k: int) -> np.ndarray:
    """Independent route: general Leibniz rule over ``pi(x1) Q(x1,x2) ... Q``."""
    bundle = derivative_recursion(fam, u, k).array()
    Qd = [fam.matrix(u)] + [fam.deriv(u, s) for s in range(1, k + 1)]
    cur = bundle
    for _ in range(j - 1):
        nxt = []
        for ell in range(k + 1):
            acc = 0.0
            for s in range(ell + 1):
                acc = acc + comb(ell, s) * np.einsum("...i,ij->...ij", cur[ell - s], Qd[s])
            nxt.append(acc)
        cur = nxt
    return np.vstack([np.asarray(c).reshape(-1) for c in cur])


def covariance_from_law(law2, values):
    """``Cov(X_0, X_1)`` from a flattened pair law and a real embedding."""
    m = values.shape[0]
    L = np.asarray(law2).reshape(m, m)
    mean0 = L.sum(axis=1) @ values
    mean1 = L.sum(axis=0) @ values
    return float(values @ L @ values - mean0 * mean1)


# -- triangular array marginals --------------------------------------------

def forward_marginals(fam: KernelFamily, n: int, pi0=None) -> List[WeightedSignedMeasure]:
    """Exact laws of ``X_{n,t}``, ``t = 0..n``: ``pi_0 Q_{1/n} ... Q_{t/n}``."""
    if n < 1:
        raise ContractViolation("n must be at least 1")
    cur = stationary_vector(fam.matrix(0.0)) if pi0 is None else np.asarray(
        pi0.weights if isinstance(pi0, WeightedSignedMeasure) else pi0, float)
    out = [WeightedSignedMeasure(cur, fam.space)]
    for t in range(1, n + 1):
        cur = cur @ fam.matrix(t / n)
        out.append(WeightedSignedMeasure(cur, fam.space))
    return out


def _memo(fam, cache):
    def at(u):
        if u not in cache:
            P = fam.matrix(u)
            cache[u] = (P, stationary_vector(P, check=False))
        return cache[u]
    return at


def local_stationarity_profile(fam: KernelFamily, n: int, V=None, j=1, cache=None):
    """Per-``t`` gaps ``||pi_{t,j}^(n) - pi_{t/n,j}||_V`` for ``t = 0..n-j+1``.

    ``cache`` (a dict keyed by ``u``) lets sweeps over several ``n`` share
    kernel evaluations, since ``t/n`` grids nest exactly.
    """
    V = fam.V0 if V is None else V
    Vv = V.values if isinstance(V, WeightFunction) else np.asarray(V, float)
    if j > 1:
        m = fam.size
        idx = np.indices((m,) * j).reshape(j, -1)
        Vv = Vv[idx].sum(axis=0)
    at = _memo(fam, {} if cache is None else cache)
    cur = at(0.0)[1]
    gaps = np.zeros(n - j + 2)
    for t in range(0, n - j + 2):
        if t:
            cur = cur @ at(t / n)[0]
        Pt, pit = at(t / n)
        exact = j_dim_array(Pt, pit, j)
        law_n = cur
        for s in range(1, j):
            law_n = np.einsum("...i,ij->...ij", law_n, at(min(t + s, n) / n)[0])
        gaps[t] = float(np.abs(law_n.reshape(-1) - exact) @ Vv)
    return gaps


def local_stationarity_gap(fam: KernelFamily, n: int, V=None, j=1, cache=None):
    """Return ``(sup_t gap, n * sup_t gap)``."""
    gaps = local_stationarity_profile(fam, n, V, j, cache)
    sup = float(gaps.max())
    return sup, n * sup


def local_stationarity_sweep(fam: KernelFamily, n_list=(100, 200, 400, 800), V=None, j=1):
    """Rows ``(n, sup_gap, n * sup_gap)`` and the ratios of consecutive scaled gaps."""
    cache = {}
    rows = [(int(n),) + local_stationarity_gap(fam, n, V, j, cache) for n in n_list]
    ratios = [b[2] / a[2] for a, b in zip(rows, rows[1:]) if a[2] > 0]
    return rows, ratios


def gap_csv(rows):
    """CSV text with header ``n,t,gap,scaled_gap`` from ``(n, t, gap)`` triples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "t", "gap", "scaled_gap"])
    for n, t, g in rows:
        w.writerow([n, t, repr(float(g)), repr(float(n * g))])
    return buf.getvalue()
