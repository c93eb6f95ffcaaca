"""Kernels with a density bounded below against a fixed base measure.

``Q_u(x, {y}) = f(u, x, y) mu(y)`` with ``f >= c_minus > 0``. The density is
affine in curves, ``f = G0 + sum_i c_i(u) G_i``, which keeps its
``u``-derivatives exact.
"""

from dataclasses import dataclass

import numpy as np

from ..measure import KernelFamily, StateSpace, WeightFunction
from .curves import Curve, ModelInvariantViolated


@dataclass(frozen=True, eq=False)
class DoeblinModel:
    base_measure: np.ndarray
    G0: np.ndarray
    terms: tuple = ()
    c_minus: float = 0.1
    grid: int = 201

    def density(self, u):
        F = np.array(self.G0, dtype=float)
        for c, G in self.terms:
            F = F + c(u) * np.asarray(G)
        return F

    def density_deriv(self, u, ell):
        F = np.zeros_like(np.asarray(self.G0, dtype=float))
        for c, G in self.terms:
            F = F + c.deriv(u, ell) * np.asarray(G)
        return F


def build_doeblin(model: DoeblinModel, k=3, space=None) -> KernelFamily:
    """Total-variation graded family (``V_l == 1``) of a Doeblin model.

    Raises
    ------
    ModelInvariantViolated
        If the density drops below ``c_minus`` or a row does not integrate to 1.
    """
    mu = np.asarray(model.base_measure, dtype=float)
    if np.any(mu < 0) or abs(mu.sum() - 1) > 1e-12:
        raise ModelInvariantViolated("base measure must be a probability vector")
    m = mu.shape[0]
    for u in np.linspace(0, 1, model.grid):
        F = model.density(u)
        if F.min() < model.c_minus:
            x, y = np.unravel_index(np.argmin(F), F.shape)
            raise ModelInvariantViolated(
                "density %.4g < c_minus=%.4g at u=%.4g, x=%d, y=%d" % (F.min(), model.c_minus, u, x, y))
        if np.abs(F @ mu - 1).max() > 1e-10:
            raise ModelInvariantViolated("density rows do not integrate to 1 against mu at u=%.4g" % u)
    space = space or StateSpace.range(m)
    ones = [WeightFunction.constant(m)] * (k + 1)
    return KernelFamily(space, k, lambda u: model.density(u) * mu[None, :],
                        lambda u, ell: model.density_deriv(u, ell) * mu[None, :],
                        weight_family=ones, name="doeblin", meta={"model": model})


def doeblin_sine(m=4, amp=0.3, seed=0, mu=None):
    """``f = 1 + amp sin(2 pi u) g(x, y)`` with ``sum_y g(x, y) mu(y) = 0`` and ``|g| <= 1``.

    ``c_minus = 1 - amp``.
    """
    rng = np.random.default_rng(seed)
    mu = np.full(m, 1.0 / m) if mu is None else np.asarray(mu, dtype=float)
    g = rng.uniform(-1, 1, size=(m, m))
    g = g - (g @ mu)[:, None]
    g = g / np.abs(g).max()
    return DoeblinModel(mu, np.ones((m, m)), ((Curve.sin(0.0, amp), g),), c_minus=1 - amp)
