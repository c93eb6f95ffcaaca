"""Binary chain driven by a discretized autoregressive covariate.

``Q_u((y1, z1), (y2, z2)) = P(u, y1, y2; z2) Qbar_u(z1, z2)`` with
``P(u, y, 1; z) = logistic(a0(u) + a1(u) y + beta(u) z)``.
States are ordered ``y * nz + z``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from ..measure import KernelFamily, StateSpace, WeightFunction
from ..oracle import ProductSpaceTooLarge
from .curves import Curve, ModelInvariantViolated, sigmoid_bundle


@dataclass(frozen=True, eq=False)
class RandomEnvLogisticModel:
    a0: Curve
    a1: Curve
    beta: Curve
    env_family: KernelFamily

    def link_bundle(self, u, z, k):
        """Derivatives of ``P(u, y, 1; z)`` for ``y = 0, 1``: shape ``(k+1, 2, nz)``."""
        out = np.zeros((k + 1, 2, z.shape[0]))
        for y in (0, 1):
            eta = [self.a0.deriv(u, ell) + self.a1.deriv(u, ell) * y + self.beta.deriv(u, ell) * z
                   for ell in range(k + 1)]
            out[:, y, :] = np.vstack([np.broadcast_to(v, z.shape) for v in sigmoid_bundle(eta, k)])
        return out


def build_random_env(model: RandomEnvLogisticModel, k=3, cap=5000) -> KernelFamily:
    """Product family on ``{0, 1} x E2``; derivatives by the Leibniz rule over ``P * Qbar``."""
    env = model.env_family
    nz = env.size
    n = 2 * nz
    if n > cap:
        raise ProductSpaceTooLarge("random-environment space has %d states (cap %d)" % (n, cap))
    k = min(k, env.order_k)
    z = env.space.values()
    if z.ndim != 1:
        raise ModelInvariantViolated("environment embedding must be scalar")

    @lru_cache(maxsize=16)
    def at(u):
        p1 = model.link_bundle(u, z, k)  # (k+1, y1, z2)
        if p1[0].min() <= 0 or p1[0].max() >= 1:
            raise ModelInvariantViolated("logistic transition probability hit 0 or 1 at u=%g" % u)
        # P(u, y1, y2; z2) for y2 in {0, 1}
        P = np.zeros((k + 1, 2, 2, nz))
        P[:, :, 1, :] = p1
        P[:, :, 0, :] = -p1
        P[0, :, 0, :] += 1.0
        Qb = [env.deriv(u, ell) for ell in range(k + 1)]
        out = []
        for ell in range(k + 1):
            Q = np.zeros((2, nz, 2, nz))
            for r in range(ell + 1):
                # P[y1, y2, z2] * Qbar[z1, z2]
                Q += comb(ell, r) * P[r][:, None, :, :] * Qb[ell - r][None, :, None, :]
            A = Q.reshape(n, n)
            A.setflags(write=False)
            out.append(A)
        return tuple(out)

    emb = np.column_stack([np.repeat([0.0, 1.0], nz), np.tile(z, 2)])
    space = StateSpace(tuple((y, j) for y in (0, 1) for j in range(nz)), emb)
    weights = [WeightFunction(np.tile(V.values, 2), V.description) for V in env.weight_family[:k + 1]]
    return KernelFamily(space, k, lambda u: at(float(u))[0], lambda u, ell: at(float(u))[ell],
                        weight_family=weights, name="random_env",
                        meta={"model": model, "nz": nz, "phi": np.tile(env.meta.get("phi", np.ones(nz)), 2)})


def random_env_example(bins=21, L=7.0, k=3, beta=None, quadrature="gauss5"):
    """Logistic chain ``a0 = -0.5 + 0.5u``, ``a1 = 0.8 sin``-modulated, ``beta = 0.4 - 0.2u`` on a
    21-bin AR(1) covariate with ``a(u) = 0.4 + 0.2u``."""
    from .tvar import ar1_example

    env = ar1_example(Curve.poly(0.4, 0.2), L=L, bins=bins, k=k, quadrature=quadrature)
    model = RandomEnvLogisticModel(Curve.poly(-0.5, 0.5), Curve.sin(0.8, 0.3),
                                   beta or Curve.poly(0.4, -0.2), env)
    return build_random_env(model, k)


def marginal_y(fam, pi):
    nz = fam.meta["nz"]
    return np.asarray(pi).reshape(2, nz).sum(axis=1)
