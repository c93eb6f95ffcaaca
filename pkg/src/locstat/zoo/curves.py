"""Parameter curves with exact derivatives and a Faa di Bruno helper."""

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from ..measure import ContractViolation


class ModelInvariantViolated(ContractViolation):
    pass


@dataclass(frozen=True)
class Curve:
    """``u -> c(u)`` of type ``"poly"`` or ``"sin"``.

    ``poly``: ``sum_i coeffs[i] u^i``.
    ``sin``:  ``c0 + c1 sin(2 pi c2 u + c3)`` (missing trailing coefficients are 0,
    except ``c2`` which defaults to 1).
    """

    kind: str
    coeffs: tuple

    def __post_init__(self):
        if self.kind not in ("poly", "sin"):
            raise ContractViolation("curve type must be 'poly' or 'sin', got %r" % (self.kind,))
        c = tuple(float(x) for x in self.coeffs)
        if len(c) == 0:
            raise ContractViolation("curve needs at least one coefficient")
        if self.kind == "sin":
            if len(c) > 4:
                raise ContractViolation("sin curve takes at most 4 coefficients")
            c = c + (0.0, 1.0, 0.0)[len(c) - 1:] if len(c) < 4 else c
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def const(cls, c):
        return cls("poly", (c,))

    @classmethod
    def poly(cls, *coeffs):
        return cls("poly", coeffs)

    @classmethod
    def sin(cls, c0, c1, c2=1.0, c3=0.0):
        return cls("sin", (c0, c1, c2, c3))

    @classmethod
    def from_json(cls, spec):
        return cls(spec["type"], tuple(spec["coeffs"]))

    def to_json(self):
        return {"type": self.kind, "coeffs": list(self.coeffs)}

    def __call__(self, u):
        return self.deriv(u, 0)

    def deriv(self, u, ell=0):
        u = np.asarray(u, dtype=float)
        if self.kind == "poly":
            c = self.coeffs
            out = np.zeros_like(u)
            for i in range(ell, len(c)):
                out = out + c[i] * (factorial(i) // factorial(i - ell)) * u ** (i - ell)
            return out if out.ndim else float(out)
        c0, c1, c2, c3 = self.coeffs
        w = 2 * np.pi * c2
        val = c1 * w ** ell * np.sin(w * u + c3 + ell * np.pi / 2)
        if ell == 0:
            val = val + c0
        return val if np.ndim(val) else float(val)

    def bundle(self, u, k):
        """``[c(u), c'(u), ..., c^(k)(u)]``."""
        return [self.deriv(u, ell) for ell in range(k + 1)]

    @property
    def is_constant(self):
        if self.kind == "poly":
            return all(x == 0 for x in self.coeffs[1:])
        return self.coeffs[1] == 0 or self.coeffs[2] == 0

    def range_on(self, grid=1001):
        v = self.deriv(np.linspace(0, 1, grid), 0)
        return float(np.min(v)), float(np.max(v))


def bell_partial(n, k, x):
    """Partial Bell polynomial ``B_{n,k}(x_1, ..., x_{n-k+1})``; ``x[i-1] = x_i``.

    Entries of ``x`` may be arrays (broadcast).
    """
    if n == 0 and k == 0:
        return 1.0
    if n == 0 or k == 0:
        return 0.0
    acc = 0.0
    for i in range(1, n - k + 2):
        acc = acc + comb(n - 1, i - 1) * x[i - 1] * bell_partial(n - i, k - 1, x)
    return acc


def faa_di_bruno(outer, inner, n):
    """``n``-th derivative of ``F(g(u))``.

    Parameters
    ----------
    outer : sequence
        ``[F(g), F'(g), ..., F^(n)(g)]`` evaluated at ``g(u)``.
    inner : sequence
        ``[g, g', ..., g^(n)]`` at ``u``.
    """
    if n == 0:
        return outer[0]
    x = list(inner[1:n + 1])
    return sum(outer[j] * bell_partial(n, j, x) for j in range(1, n + 1))


def faa_di_bruno_all(outer, inner, k):
    return [faa_di_bruno(outer, inner, n) for n in range(k + 1)]


def leibniz(a, b, ell):
    """``ell``-th derivative of a product from derivative lists ``a`` and ``b``."""
    return sum(comb(ell, r) * a[r] * b[ell - r] for r in range(ell + 1))


def reciprocal_bundle(c, k):
    """Derivatives of ``1/c(u)`` from ``c = [c, c', ...]``."""
    outer = [(-1) ** j * factorial(j) / c[0] ** (j + 1) for j in range(k + 1)]
    return faa_di_bruno_all(outer, c, k)


def sigmoid_bundle(eta, k):
    """Derivatives of ``logistic(eta(u))`` given ``eta = [eta, eta', ...]`` (``k <= 3``)."""
    s = 1.0 / (1.0 + np.exp(-np.asarray(eta[0], dtype=float)))
    d1 = s * (1 - s)
    outer = [s, d1, d1 * (1 - 2 * s), d1 * (1 - 2 * s) ** 2 - 2 * d1 ** 2]
    if k > 3:
        raise ContractViolation("logistic link derivatives are implemented up to order 3")
    return faa_di_bruno_all(outer, eta, k)
