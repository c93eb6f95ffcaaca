"""Finite state spaces, V-weighted signed measures and Markov kernel families.

All objects are immutable after construction (arrays are flagged read-only)
so they can be shared freely between workers.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._accel import USE_NUMBA, njit

STOCHASTIC_TOL = 1e-12
DERIV_ROWSUM_TOL = 1e-10


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class NotStochastic(ContractViolation):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Ordered finite state set with an optional real embedding.

    ``embedding`` has shape ``(m,)`` or ``(m, d)``; it is what weight
    functions, test functionals and discretizers look at.
    """

    labels: tuple
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 1:
            raise ContractViolation("state space must have at least one state")
        if len(set(labels)) != len(labels):
            raise ContractViolation("state labels must be distinct")
        object.__setattr__(self, "labels", labels)
        if self.embedding is not None:
            emb = _frozen(self.embedding)
            if emb.shape[0] != len(labels):
                raise ContractViolation("embedding length does not match the number of states")
            object.__setattr__(self, "embedding", emb)

    @property
    def size(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def range(cls, m, embedding=None):
        if embedding is None:
            embedding = np.arange(m, dtype=float)
        return cls(tuple(range(m)), embedding)

    def values(self):
        """Real embedding, defaulting to ``0..m-1``."""
        if self.embedding is None:
            return np.arange(self.size, dtype=float)
        return self.embedding

    def index(self, label):
        return self.labels.index(label)

    def power(self, j):
        """``self^j`` with lexicographic ordering (last coordinate fastest)."""
        m = self.size
        idx = np.indices((m,) * j).reshape(j, -1).T
        labels = tuple(tuple(self.labels[i] for i in row) for row in idx)
        vals = self.values()
        if vals.ndim == 1:
            emb = vals[idx]
        else:
            emb = vals[idx].reshape(idx.shape[0], -1)
        return StateSpace(labels, emb)


@dataclass(frozen=True, eq=False)
class WeightFunction:
    values: np.ndarray
    description: str = ""

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1:
            raise ContractViolation("weight values must be one-dimensional")
        if np.any(~np.isfinite(v)) or np.any(v < 1.0):
            raise ContractViolation("weight function must take values in [1, inf)")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def constant(cls, m, value=1.0):
        return cls(np.full(m, float(value)), "constant %g" % value)

    def power(self, kappa):
        return WeightFunction(self.values ** kappa, "(%s)^%g" % (self.description, kappa))


def check_graded(weights: Sequence[WeightFunction]):
    """Raise unless ``V_0 <= V_1 <= ... <= V_k`` pointwise."""
    for lo, hi in zip(weights[:-1], weights[1:]):
        if len(lo) != len(hi):
            raise ContractViolation("graded weights have different sizes")
        if np.any(lo.values > hi.values * (1 + 1e-14)):
            raise ContractViolation("weight family is not pointwise non-decreasing")


@dataclass(frozen=True, eq=False)
class WeightedSignedMeasure:
    weights: np.ndarray
    space: StateSpace

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.shape[0] != self.space.size:
            raise ContractViolation("measure dimension does not match its state space")
        object.__setattr__(self, "weights", w)

    @property
    def mass(self):
        return float(self.weights.sum())

    def is_probability(self, tol=1e-12):
        return bool(np.all(self.weights >= -tol) and abs(self.mass - 1.0) <= tol)

    def is_zero_mass(self, tol=1e-12):
        return abs(self.mass) <= tol

    def _coerce(self, other):
        if isinstance(other, WeightedSignedMeasure):
            if other.weights.shape != self.weights.shape:
                raise ContractViolation("measures live on spaces of different size")
            return other.weights
        return NotImplemented

    def __add__(self, other):
        w = self._coerce(other)
        if w is NotImplemented:
            return w
        return WeightedSignedMeasure(self.weights + w, self.space)

    def __sub__(self, other):
        w = self._coerce(other)
        if w is NotImplemented:
            return w
        return WeightedSignedMeasure(self.weights - w, self.space)

    def __mul__(self, c):
        return WeightedSignedMeasure(self.weights * float(c), self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return WeightedSignedMeasure(-self.weights, self.space)

    def integrate(self, f_values):
        return float(np.dot(self.weights, f_values))

    @classmethod
    def dirac(cls, space, i):
        w = np.zeros(space.size)
        w[i] = 1.0
        return cls(w, space)

    @classmethod
    def zeros(cls, space):
        return cls(np.zeros(space.size), space)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Row-stochastic matrix; rows are indexed by the source state."""

    matrix: np.ndarray
    space: StateSpace
    tol: float = STOCHASTIC_TOL

    def __post_init__(self):
        P = _frozen(self.matrix)
        m = self.space.size
        if P.shape != (m, m):
            raise ContractViolation("kernel shape %s does not match %d states" % (P.shape, m))
        if np.any(P < 0):
            raise NotStochastic("kernel has negative entries (min %.3e)" % P.min())
        err = np.abs(P.sum(axis=1) - 1.0).max()
        if err > self.tol:
            raise NotStochastic("kernel rows deviate from 1 by %.3e > %.1e" % (err, self.tol))
        object.__setattr__(self, "matrix", P)

    @property
    def size(self):
        return self.space.size

    @classmethod
    def identity(cls, space):
        return cls(np.eye(space.size), space)

    @classmethod
    def rank_one(cls, nu: WeightedSignedMeasure):
        m = nu.space.size
        return cls(np.tile(nu.weights, (m, 1)), nu.space)


class KernelFamily:
    """A ``u``-indexed family of kernels with per-entry ``u``-derivatives.

    Parameters
    ----------
    space : StateSpace
    order_k : int
        Highest derivative order that ``deriv`` supports.
    eval_fn : callable ``u -> (m, m) ndarray``
        Row-stochastic matrix at ``u``.
    deriv_fn : callable ``(u, ell) -> (m, m) ndarray``
        Entrywise ``ell``-th derivative in ``u``; rows sum to zero.
    weight_family : sequence of WeightFunction, optional
        Graded weights ``V_0 <= ... <= V_k``; defaults to ``V == 1``.
    name : str
    analytic : bool
        False when ``deriv_fn`` is a finite-difference fallback.
    """

    def __init__(self, space, order_k, eval_fn, deriv_fn, weight_family=None,
                 name="family", analytic=True, meta=None):
        self.space = space
        self.order_k = int(order_k)
        self._eval = eval_fn
        self._deriv = deriv_fn
        if weight_family is None:
            weight_family = [WeightFunction.constant(space.size)] * (self.order_k + 1)
        weight_family = list(weight_family)
        if len(weight_family) < self.order_k + 1:
            weight_family += [weight_family[-1]] * (self.order_k + 1 - len(weight_family))
        check_graded(weight_family)
        self.weight_family = tuple(weight_family)
        self.name = name
        self.analytic = analytic
        self.meta = dict(meta or {})

    @property
    def size(self):
        return self.space.size

    @property
    def V0(self):
        return self.weight_family[0]

    def matrix(self, u):
        return np.asarray(self._eval(float(u)), dtype=float)

    def eval(self, u):
        return TransitionKernel(self.matrix(u), self.space)

    def deriv(self, u, ell):
        ell = int(ell)
        if ell == 0:
            return self.matrix(u)
        if not 1 <= ell <= self.order_k:
            raise ContractViolation("derivative order %d outside 1..%d" % (ell, self.order_k))
        D = np.asarray(self._deriv(float(u), ell), dtype=float)
        if D.shape != (self.size, self.size):
            raise ContractViolation("derivative array has shape %s" % (D.shape,))
        return D

    def check_derivative_rows(self, u, tol=DERIV_ROWSUM_TOL):
        worst = 0.0
        for ell in range(1, self.order_k + 1):
            worst = max(worst, float(np.abs(self.deriv(u, ell).sum(axis=1)).max()))
        if worst > tol:
            raise ContractViolation("derivative rows sum to %.3e, not 0" % worst)
        return worst

    def fd_check(self, u, ell, h=1e-4):
        """Max abs gap between ``deriv(u, ell)`` and a central difference of order ``ell-1``."""
        lo, hi = u - h, u + h
        if lo < 0:
            lo, hi = u, u + 2 * h
        elif hi > 1:
            lo, hi = u - 2 * h, u
        fd = (self.deriv(hi, ell - 1) - self.deriv(lo, ell - 1)) / (hi - lo)
        mid = 0.5 * (lo + hi)
        return float(np.abs(fd - self.deriv(mid, ell)).max())

    @classmethod
    def constant(cls, kernel: TransitionKernel, order_k=3, weight_family=None, name="constant"):
        P = kernel.matrix
        zero = np.zeros_like(P)
        return cls(kernel.space, order_k, lambda u: P, lambda u, ell: zero,
                   weight_family=weight_family, name=name)

    @classmethod
    def from_fd(cls, space, order_k, eval_fn, h=1e-3, **kw):
        """Family whose derivatives come from central differences (lower trust)."""
        from math import comb

        def deriv(u, ell):
            lo = max(0.0, u - ell * h / 2 - 1e-15)
            lo = min(lo, 1.0 - ell * h)
            acc = 0.0
            for i in range(ell + 1):
                acc = acc + (-1) ** (ell - i) * comb(ell, i) * np.asarray(eval_fn(lo + i * h))
            return acc / h ** ell

        return cls(space, order_k, eval_fn, deriv, analytic=False, **kw)


# -- norms and contraction -------------------------------------------------

def _check_dims(n, *others):
    for o in others:
        if o != n:
            raise ContractViolation("dimension mismatch: %d vs %d" % (n, o))


def vnorm(mu, V):
    """``sum_x V(x) |mu(x)|``."""
    w = mu.weights if isinstance(mu, WeightedSignedMeasure) else np.asarray(mu, float)
    v = V.values if isinstance(V, WeightFunction) else np.asarray(V, float)
    _check_dims(w.shape[-1], v.shape[0])
    return float(np.abs(w) @ v) if w.ndim == 1 else np.abs(w) @ v


def apply_kernel(mu: WeightedSignedMeasure, P: TransitionKernel) -> WeightedSignedMeasure:
    _check_dims(mu.space.size, P.size)
    return WeightedSignedMeasure(mu.weights @ P.matrix, mu.space)


def kernel_power(P: TransitionKernel, n: int) -> TransitionKernel:
    """``P^n`` by repeated squaring; ``n = 0`` gives the identity."""
    n = int(n)
    if n < 0:
        raise ContractViolation("kernel power must be non-negative")
    M = np.linalg.matrix_power(P.matrix, n)
    return TransitionKernel(M, P.space, tol=max(STOCHASTIC_TOL, n * STOCHASTIC_TOL))


@njit
def _dobrushin_numba(P, v):
    m = P.shape[0]
    best = 0.0
    for x in range(m):
        for y in range(x + 1, m):
            s = 0.0
            for z in range(m):
                s += v[z] * abs(P[x, z] - P[y, z])
            r = s / (v[x] + v[y])
            if r > best:
                best = r
    return best


def _dobrushin_numpy(P, v, block=64):
    m = P.shape[0]
    best = 0.0
    for start in range(0, m, block):
        rows = P[start:start + block]
        # pairwise |row_x - row_y| . v for x in block, all y
        dist = np.abs(rows[:, None, :] - P[None, :, :]) @ v
        ratio = dist / (v[start:start + block, None] + v[None, :])
        best = max(best, float(ratio.max()))
    return best


def dobrushin_matrix(P, v):
    P = np.ascontiguousarray(P, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if P.shape[0] < 2:
        return 0.0
    return float(_dobrushin_numba(P, v) if USE_NUMBA else _dobrushin_numpy(P, v))


def dobrushin_coeff(P: TransitionKernel, V: WeightFunction) -> float:
    """Worst pairwise V-contraction ``max_{x!=y} ||d_x P - d_y P||_V / (V(x)+V(y))``."""
    _check_dims(P.size, len(V))
    return dobrushin_matrix(P.matrix, V.values)


def ergodicity_bound(P: TransitionKernel, pi: WeightedSignedMeasure, V: WeightFunction) -> float:
    """``sup_x ||d_x P - pi||_V / V(x)``; dominates :func:`dobrushin_coeff` when ``pi P = pi``."""
    _check_dims(P.size, pi.space.size, len(V))
    if not pi.is_probability(1e-10):
        raise ContractViolation("ergodicity_bound needs a probability measure")
    diff = np.abs(P.matrix - pi.weights[None, :]) @ V.values
    return float((diff / V.values).max())


def zero_mass_contraction_ratio(mu, P, V):
    """``||mu P||_V / ||mu||_V`` for a zero-mass ``mu`` (the sup form of the coefficient)."""
    w = mu.weights if isinstance(mu, WeightedSignedMeasure) else np.asarray(mu, float)
    return vnorm(w @ P.matrix, V) / vnorm(w, V)
