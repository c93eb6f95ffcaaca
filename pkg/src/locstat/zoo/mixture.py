"""Finite families that are affine in a few curves: ``P(u) = M0 + sum_i c_i(u) M_i``.

Covers the two-state testbed, random smooth families and constant families.
Derivatives are exact: ``P^(l)(u) = sum_i c_i^(l)(u) M_i``.
"""

import numpy as np

from ..measure import ContractViolation, KernelFamily, StateSpace, TransitionKernel
from .curves import Curve


def curve_mixture(M0, terms, space=None, order_k=3, weight_family=None, name="mixture", meta=None):
    """Kernel family ``u -> M0 + sum c(u) M`` for ``terms = [(curve, M), ...]``.

    Every ``M`` must have zero row sums and ``M0`` must be row-stochastic,
    so that all members are stochastic whenever their entries are nonnegative.
    """
    M0 = np.asarray(M0, dtype=float)
    mats = [np.asarray(M, dtype=float) for _, M in terms]
    curves = [c for c, _ in terms]
    m = M0.shape[0]
    if np.abs(M0.sum(axis=1) - 1).max() > 1e-12:
        raise ContractViolation("base matrix must be row-stochastic")
    for M in mats:
        if M.shape != M0.shape or np.abs(M.sum(axis=1)).max() > 1e-12:
            raise ContractViolation("mixture terms must be square with zero row sums")
    space = space or StateSpace.range(m)

    def ev(u):
        P = M0.copy()
        for c, M in zip(curves, mats):
            P += c(u) * M
        return P

    def dv(u, ell):
        D = np.zeros_like(M0)
        for c, M in zip(curves, mats):
            D += c.deriv(u, ell) * M
        return D

    fam = KernelFamily(space, order_k, ev, dv, weight_family=weight_family, name=name, meta=meta)
    grid = np.linspace(0, 1, 201)
    if min(ev(u).min() for u in grid) < 0:
        raise ContractViolation("mixture family has negative entries on [0, 1]")
    return fam


def two_state(a=None, b=None, order_k=3):
    """``P(u) = [[1-a, a], [b, 1-b]]`` with default ``a = 0.3+0.4u``, ``b = 0.5-0.2u``."""
    a = a or Curve.poly(0.3, 0.4)
    b = b or Curve.poly(0.5, -0.2)
    I = np.eye(2)
    Ma = np.array([[-1.0, 1.0], [0.0, 0.0]])
    Mb = np.array([[0.0, 0.0], [1.0, -1.0]])
    meta = {"a": a, "b": b}
    return curve_mixture(I, [(a, Ma), (b, Mb)], StateSpace((0, 1), np.array([0.0, 1.0])),
                         order_k=order_k, name="two_state", meta=meta)


def two_state_pi(a, b, u):
    """Closed-form ``(b, a)/(a+b)`` for the two-state family."""
    av, bv = a(u), b(u)
    return np.array([bv, av]) / (av + bv)


def _random_stochastic(rng, m, conc=1.0):
    return rng.dirichlet(np.full(m, conc), size=m)


def random_smooth(m=5, seed=0, order_k=3):
    """Smooth random family ``w1 A + w2 B + w3 C`` with trigonometric weights.

    ``w1 = 1/3 + 0.15 sin(2 pi u + p1)``, ``w2 = 1/3 + 0.15 cos(2 pi u + p2)``,
    ``w3 = 1 - w1 - w2`` stays above 1/30, so every member is strictly positive
    when ``A, B, C`` are.
    """
    rng = np.random.default_rng(seed)
    A, B, C = (_random_stochastic(rng, m) for _ in range(3))
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    w1 = Curve.sin(1 / 3, 0.15, 1.0, p1)
    w2 = Curve.sin(1 / 3, 0.15, 1.0, p2 + np.pi / 2)
    return curve_mixture(C, [(w1, A - C), (w2, B - C)], order_k=order_k,
                         name="random_smooth[%d]" % seed, meta={"seed": seed})


def constant_family(P, order_k=3, name="constant"):
    P = np.asarray(P, dtype=float)
    return KernelFamily.constant(TransitionKernel(P, StateSpace.range(P.shape[0])), order_k, name=name)
