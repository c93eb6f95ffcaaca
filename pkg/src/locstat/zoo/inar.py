"""Integer-valued autoregressions: thinning plus immigration, truncated at ``N``.

Transition rows are convolutions ``zeta_1^{*x_p} * ... * zeta_p^{*x_1} * xi``
of derivative bundles, using ``(a*b)^(l) = sum_s C(l, s) a^(s) * b^(l-s)``.
The top state ``N`` absorbs the truncated tail.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Tuple

import numpy as np
from scipy import stats

from ..measure import ContractViolation, KernelFamily, StateSpace
from .curves import Curve, ModelInvariantViolated, faa_di_bruno_all
from .porder import POrderKernel, p_order_vectorize
from .tvar import TruncationTooCoarse

TRUNC_LOSS_TOL = 1e-8


@dataclass(frozen=True)
class PmfCurve:
    """``u``-indexed pmf on ``{0, 1, ...}``: ``"bernoulli"`` (``P(1) = c(u)``) or ``"poisson"`` (rate ``c(u)``)."""

    kind: str
    param: Curve

    def __post_init__(self):
        if self.kind not in ("bernoulli", "poisson"):
            raise ContractViolation("pmf kind must be 'bernoulli' or 'poisson'")

    def mean(self, u):
        return float(self.param(u))

    def bundle(self, u, k, N):
        """``(k+1, N+1)`` array of ``d^l/du^l pmf(y)`` for ``y = 0..N``."""
        c = [self.param.deriv(u, ell) for ell in range(k + 1)]
        out = np.zeros((k + 1, N + 1))
        if self.kind == "bernoulli":
            for ell in range(k + 1):
                if ell == 0:
                    out[0, 0], out[0, 1] = 1 - c[0], c[0]
                else:
                    out[ell, 0], out[ell, 1] = -c[ell], c[ell]
            return out
        lam = c[0]
        y = np.arange(N + 1)
        base = stats.poisson.pmf(y, lam)
        # d^r/dlam^r p_y = sum_i C(r, i) (-1)^(r-i) p_{y-i}
        dlam = []
        for r in range(k + 1):
            acc = np.zeros(N + 1)
            for i in range(r + 1):
                shifted = np.zeros(N + 1)
                shifted[i:] = base[:N + 1 - i]
                acc += comb(r, i) * (-1) ** (r - i) * shifted
            dlam.append(acc)
        return np.vstack(faa_di_bruno_all(dlam, c, k))


def conv_bundle(a, b, N):
    """Leibniz rule for convolutions, truncated to ``0..N``."""
    k = a.shape[0] - 1
    out = np.zeros((k + 1, N + 1))
    for ell in range(k + 1):
        for s in range(ell + 1):
            out[ell] += comb(ell, s) * np.convolve(a[s], b[ell - s])[:N + 1]
    return out


def delta_bundle(k, N):
    out = np.zeros((k + 1, N + 1))
    out[0, 0] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class INARModel:
    thinning: Tuple[PmfCurve, ...]
    immigration: PmfCurve
    truncation_N: int = 0

    @property
    def p(self):
        return len(self.thinning)

    def alpha(self, grid=201):
        return max(sum(z.mean(u) for z in self.thinning) for u in np.linspace(0, 1, grid))

    def immigration_mean(self, grid=201):
        return max(self.immigration.mean(u) for u in np.linspace(0, 1, grid))


def default_truncation(alpha, imm_mean, tail=1e-9):
    """Smallest ``N >= 10 mean/(1-alpha)`` with a Poisson tail estimate below ``tail``.

    The stationary mean is bounded by ``imm_mean/(1-alpha)``; the tail is
    estimated with a Poisson law of twice that mean.
    """
    mu = imm_mean / (1 - alpha)
    N = int(np.ceil(10 * mu))
    while stats.poisson.sf(N, 2 * mu) > tail:
        N += 1
    return max(N, 5)


def _power_bundles(z, k, N, u):
    """``zeta^{*x}`` bundles for ``x = 0..N``."""
    b = z.bundle(u, k, N)
    out = [delta_bundle(k, N)]
    for _ in range(N):
        out.append(conv_bundle(out[-1], b, N))
    return out


def inar_rows(model: INARModel, u, k, N):
    """``(k+1, (N+1)**p, N+1)`` rows with the top state absorbing the tail, plus per-row lost mass."""
    p = model.p
    powers = [_power_bundles(z, k, N, u) for z in model.thinning]
    imm = model.immigration.bundle(u, k, N)
    idx = np.indices((N + 1,) * p).reshape(p, -1).T
    rows = np.zeros((k + 1, idx.shape[0], N + 1))
    lost = np.zeros(idx.shape[0])
    for r, x in enumerate(idx):
        acc = imm
        for i in range(p):
            # lag i+1 thins the state x_{p-i}
            acc = conv_bundle(acc, powers[i][x[p - 1 - i]], N)
        tail = acc[:, :N].sum(axis=1)
        lost[r] = 1.0 - acc[0].sum()
        acc = acc.copy()
        acc[0, N] = 1.0 - tail[0]
        acc[1:, N] = -tail[1:]
        rows[:, r, :] = acc
    return rows, lost


def inar_porder_kernel(model: INARModel, k=3, N=None):
    alpha = model.alpha()
    if alpha >= 1:
        raise ModelInvariantViolated("sum of thinning means %.4g >= 1" % alpha)
    imm_mean = model.immigration_mean()
    if N is None:
        N = model.truncation_N or default_truncation(alpha, imm_mean)
    floor = 10 * imm_mean / (1 - alpha)
    if N < floor:
        raise TruncationTooCoarse("truncation N=%d below 10*mean/(1-alpha)=%.1f" % (N, floor))

    @lru_cache(maxsize=16)
    def at(u):
        rows, lost = inar_rows(model, u, k, N)
        rows.setflags(write=False)
        return rows, lost

    space = StateSpace.range(N + 1)
    return POrderKernel(space, model.p, k, lambda u: at(float(u))[0][0],
                        lambda u, ell: at(float(u))[0][ell], phi=1.0 + np.arange(N + 1.0), d1=1.0,
                        q=1.0, name="inar", meta={"model": model, "N": N, "absorbed_at": at})


def build_inar(model: INARModel, k=3, N=None, loss_tol=TRUNC_LOSS_TOL, check_grid=(0.0, 0.5, 1.0)):
    """Finite INAR(p) family on ``{0..N}^p``.

    Raises
    ------
    TruncationTooCoarse
        If the stationary-weighted mass beyond ``N`` exceeds ``loss_tol``.
    """
    from ..oracle import stationary_vector

    R = inar_porder_kernel(model, k, N)
    fam = p_order_vectorize(R)
    fam.meta.update(R.meta)
    worst = 0.0
    for u in check_grid:
        lost = R.meta["absorbed_at"](float(u))[1]
        pi = stationary_vector(fam.matrix(u), check=False)
        worst = max(worst, float(pi @ lost))
    fam.meta["truncation_loss"] = worst
    if worst > loss_tol:
        raise TruncationTooCoarse("stationary mass beyond N=%d is %.3e > %.1e" % (R.meta["N"], worst, loss_tol))
    return fam


def inar1_example(alpha=None, lam=None, N=None, k=3):
    """Bernoulli thinning ``alpha(u) = 0.3 + 0.2u``, Poisson immigration ``lam(u) = 1 + 0.5 sin(2 pi u)``."""
    alpha = alpha or Curve.poly(0.3, 0.2)
    lam = lam or Curve.sin(1.0, 0.5)
    return INARModel((PmfCurve("bernoulli", alpha),), PmfCurve("poisson", lam), N or 0)


def inarch_model(alpha0, alphas, N=0):
    """Poisson thinning and Poisson immigration: row ``x`` is Poisson(``alpha0 + sum alpha_i x_i``)."""
    return INARModel(tuple(PmfCurve("poisson", a) for a in alphas), PmfCurve("poisson", alpha0), N)


def inarch_direct_rows(model: INARModel, u, N):
    """Poisson rows ``Poisson(alpha0(u) + sum_i alpha_i(u) x_{p+1-i})`` truncated at ``N`` (top absorbs)."""
    p = model.p
    idx = np.indices((N + 1,) * p).reshape(p, -1).T
    rate = model.immigration.mean(u) + sum(model.thinning[i].mean(u) * idx[:, p - 1 - i] for i in range(p))
    y = np.arange(N + 1)
    rows = stats.poisson.pmf(y[None, :], rate[:, None])
    rows[:, N] = 1.0 - rows[:, :N].sum(axis=1)
    return rows
