"""p-order kernels and their first-order vectorization on ``E^p``."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..measure import ContractViolation, KernelFamily, StateSpace, WeightFunction
from ..oracle import DEFAULT_PRODUCT_CAP, ProductSpaceTooLarge


@dataclass(frozen=True, eq=False)
class POrderKernel:
    """``R_u(x_1..x_p, y)`` with rows over ``E^p`` in lexicographic order.

    ``x_p`` is the most recent state. ``eval_fn(u)`` returns an
    ``(m**p, m)`` array and ``deriv_fn(u, l)`` its entrywise ``l``-th derivative.
    ``phi`` holds ``phi(x) >= 1`` on ``E`` and the weights are
    ``V_s(x) = sum_i phi(x_i)^(d1 + q s)``.
    """

    space: StateSpace
    p: int
    order_k: int
    eval_fn: Callable
    deriv_fn: Callable
    phi: Optional[np.ndarray] = None
    d1: float = 0.0
    q: float = 0.0
    name: str = "R"
    meta: dict = field(default_factory=dict)

    def phi_values(self):
        return np.ones(self.space.size) if self.phi is None else np.asarray(self.phi, float)


def shift_targets(m, p):
    """Column index of ``(x_2, .., x_p, y)`` for each row ``(x_1..x_p)`` and ``y``: shape ``(m**p, m)``."""
    rows = np.arange(m ** p)
    tail = rows % (m ** (p - 1)) if p > 1 else np.zeros_like(rows)
    return tail[:, None] * m + np.arange(m)[None, :]


def p_order_vectorize(R: POrderKernel, cap=DEFAULT_PRODUCT_CAP, dense_cap=5000) -> KernelFamily:
    """First-order family on ``E^p``: ``Q_u(x, dy) = R_u(x, dy_p) prod_i delta_{x_{i+1}}(dy_i)``."""
    m, p = R.space.size, R.p
    n = m ** p
    if n > cap or n > dense_cap:
        raise ProductSpaceTooLarge("vectorized space has %d states (cap %d)" % (n, min(cap, dense_cap)))
    phi = R.phi_values()
    if p == 1:
        weights = [WeightFunction(phi ** (R.d1 + R.q * s), "phi^(%g)" % (R.d1 + R.q * s))
                   for s in range(R.order_k + 1)]
        return KernelFamily(R.space, R.order_k, R.eval_fn, R.deriv_fn, weight_family=weights,
                            name=R.name, meta=dict(R.meta, p=1, phi=phi))
    targets = shift_targets(m, p)
    rows = np.repeat(np.arange(n), m)
    cols = targets.reshape(-1)

    def lift(A):
        A = np.asarray(A, dtype=float)
        if A.shape != (n, m):
            raise ContractViolation("p-order kernel must have shape (%d, %d), got %s" % (n, m, A.shape))
        out = np.zeros((n, n))
        out[rows, cols] = A.reshape(-1)
        return out

    idx = np.indices((m,) * p).reshape(p, -1)
    weights = []
    for s in range(R.order_k + 1):
        e = R.d1 + R.q * s
        weights.append(WeightFunction((phi[idx] ** e).sum(axis=0), "sum_i phi(x_i)^(%g)" % e))
    return KernelFamily(R.space.power(p), R.order_k, lambda u: lift(R.eval_fn(u)),
                        lambda u, ell: lift(R.deriv_fn(u, ell)), weight_family=weights,
                        name="%s[p=%d]" % (R.name, p), meta=dict(R.meta, p=p, base_size=m, phi=phi))
