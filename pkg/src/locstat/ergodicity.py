"""Drift and minorization certificates and fitted geometric decay rates.

Everything here is exact linear algebra on finite kernels: drift
inequalities are checked state by state, minorizations are the columnwise
minimum over the small set, and decay curves ``||d_x P^n - pi||_V / V(x)``
are computed by repeated products.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .measure import ContractViolation, KernelFamily, WeightFunction
from .oracle import stationary_vector

DECAY_FLOOR = 1e-12
FIT_FLOOR = 1e-9  # below this, rounding in |d_x P^n - pi| dominates the curve
LAMBDA_GRID = tuple(np.round(np.linspace(0.0, 0.95, 20), 10))


class NoMinorization(ContractViolation):
    """Some column of the kernel vanishes on the candidate small set."""


class ExactlyCoupled(Exception):
    """Decay curve hits the floor immediately (``kappa_hat = 0``)."""


def _values(V):
    return V.values if isinstance(V, WeightFunction) else np.asarray(V, dtype=float)


@dataclass(frozen=True)
class DriftCheck:
    passed: bool
    worst_state: int
    worst_excess: float
    lambda_needed: float


def check_drift(P, V, lam, b, tol=1e-12):
    """Exhaustive check of ``PV <= lam V + b``.

    ``lambda_needed`` is the smallest ``lam'`` that makes the inequality hold
    with the given ``b``.
    """
    P = np.asarray(getattr(P, "matrix", P), dtype=float)
    v = _values(V)
    PV = P @ v
    excess = PV - (lam * v + b)
    worst = int(np.argmax(excess))
    need = float(np.max((PV - b) / v))
    return DriftCheck(bool(excess[worst] <= tol * max(1.0, abs(PV[worst]))), worst,
                      float(excess[worst]), max(need, 0.0))


def construct_minorization(P, V, r):
    """Maximal ``(eta, nu)`` with ``P(x, .) >= eta nu`` on ``C = {V <= r}``.

    Raises
    ------
    ContractViolation
        If the small set is empty.
    NoMinorization
        If ``eta = 0``.
    """
    P = np.asarray(getattr(P, "matrix", P), dtype=float)
    C = _values(V) <= r
    if not C.any():
        raise ContractViolation("small set {V <= %g} is empty" % r)
    floor = P[C].min(axis=0)
    eta = float(floor.sum())
    if eta <= 0:
        raise NoMinorization("no common mass on {V <= %g} (%d states)" % (r, int(C.sum())))
    return min(eta, 1.0), floor / eta


@dataclass(frozen=True, eq=False)
class DriftCertificate:
    """Condition ``C(V, lambda, b, r, eta, nu)`` for an ``m``-step kernel."""

    V: WeightFunction
    lam: float
    b: float
    r: float
    eta: float
    nu: np.ndarray
    m: int = 1
    u: tuple = ()

    def level_ok(self):
        return self.r > 2 * self.b / (1 - self.lam)

    def verify(self, P, tol=1e-12):
        P = np.asarray(getattr(P, "matrix", P), dtype=float)
        v = _values(self.V)
        drift = check_drift(P, v, self.lam, self.b, tol).passed
        C = v <= self.r
        minor = bool(np.all(P[C] >= self.eta * self.nu[None, :] - tol))
        return drift and minor and self.level_ok() and 0 <= self.lam < 1 and self.b > 0

    def to_json(self):
        return {"lambda": self.lam, "b": self.b, "r": self.r, "eta": self.eta, "m": self.m,
                "u": list(self.u), "nu": [float(x) for x in self.nu]}


def find_drift_constants(P, V, lambdas=LAMBDA_GRID, margin=1e-9, m=1, u=()):
    """Search ``lambda`` on a grid for a certificate with the smallest level ``r``.

    ``b(lambda) = max_x (PV - lambda V)^+`` and ``r = 2b/(1-lambda) (1+margin)``
    (raised to ``min V`` so the small set is never empty). ``lambda = 0`` is
    allowed. Returns ``None`` when no grid value admits a minorization.
    """
    P = np.asarray(getattr(P, "matrix", P), dtype=float)
    v = _values(V)
    PV = P @ v
    best = None
    for lam in lambdas:
        b = float(max(np.max(PV - lam * v), 1e-300))
        r = max(2 * b / (1 - lam) * (1 + margin), float(v.min()))
        if r <= 2 * b / (1 - lam):
            r = np.nextafter(2 * b / (1 - lam), np.inf)
        try:
            eta, nu = construct_minorization(P, v, r)
        except ContractViolation:
            continue
        if best is None or r < best.r:
            Vw = V if isinstance(V, WeightFunction) else WeightFunction(v)
            best = DriftCertificate(Vw, float(lam), b, float(r), eta, nu, m, tuple(u))
    return best


def jensen_grading_check(P, cert: DriftCertificate, kappa):
    """Check ``C(V^k, lambda^k, b^k, r^k, eta, nu)`` directly for ``0 < kappa <= 1``.

    Returns ``(drift_ok, minor_ok)``; the level condition is not part of the
    implication and is not tested.
    """
    P = np.asarray(getattr(P, "matrix", P), dtype=float)
    v = _values(cert.V) ** kappa
    drift = check_drift(P, v, cert.lam ** kappa, cert.b ** kappa).passed
    C = v <= cert.r ** kappa
    minor = bool(np.all(P[C] >= cert.eta * cert.nu[None, :] - 1e-12))
    return drift, minor


# -- epsilon windows -------------------------------------------------------

def window_tuples(m, eps=0.1, n_samples=8, seed=0, include_diagonal=True):
    """``u``-tuples of length ``m`` with pairwise gaps below ``eps``."""
    rng = np.random.default_rng(seed)
    out = []
    if include_diagonal:
        out += [tuple([u] * m) for u in (0.0, 0.5, 1.0)]
    for _ in range(n_samples):
        width = eps * (1 - 1e-9)
        lo = rng.uniform(0, 1 - width)
        out.append(tuple(np.sort(lo + rng.uniform(0, width, size=m))))
    return out


def window_product(fam: KernelFamily, us):
    P = fam.matrix(us[0])
    for u in us[1:]:
        P = P @ fam.matrix(u)
    return P


def certify_family(fam: KernelFamily, V=None, u_grid=None, m=1, eps=0.1, n_windows=8, seed=0):
    """Certificates for ``Q_u^m`` on a grid and for sampled epsilon-window products.

    Returns ``(all_ok, certificates)``; a ``None`` entry marks a failure.
    """
    V = fam.V0 if V is None else V
    u_grid = np.linspace(0, 1, 11) if u_grid is None else u_grid
    tuples = [tuple([float(u)] * m) for u in u_grid]
    if m > 1 or n_windows:
        tuples += window_tuples(max(m, 2), eps, n_windows, seed, include_diagonal=False)
    certs = []
    for us in tuples:
        P = window_product(fam, us)
        cert = find_drift_constants(P, V, m=len(us), u=us)
        if cert is not None and not cert.verify(P):
            cert = None
        certs.append((us, cert))
    return all(c is not None for _, c in certs), certs


# -- decay fits ------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    u: float
    kappa_hat: float
    C_hat: float
    residual: float
    n_range: tuple
    exactly_coupled: bool = False


def decay_curve(P, pi, V, x0, n_max):
    """``max_{x in x0} ||d_x P^n - pi||_V / V(x)`` for ``n = 1..n_max``."""
    P = np.asarray(P, dtype=float)
    v = _values(V)
    x0 = np.asarray(x0, dtype=int)
    D = P[x0].copy()
    out = np.empty(n_max)
    for n in range(n_max):
        if n:
            D = D @ P
        out[n] = float(np.max((np.abs(D - pi[None, :]) @ v) / v[x0]))
    return out


def default_x0(V, count=5):
    v = _values(V)
    return np.argsort(-v, kind="stable")[:min(count, v.shape[0])]


def fit_geometric_decay(fam, u, V=None, x0=None, n_max=200, floor=DECAY_FLOOR, fit_floor=FIT_FLOOR):
    """Least-squares fit ``log d_n = log C + n log kappa`` on the tail half of the valid range.

    Points count as valid above ``floor``; the fit itself uses those above
    ``fit_floor`` when there are at least two of them.

    Raises
    ------
    ExactlyCoupled
        If the curve is below ``floor`` from ``n = 1`` on.
    """
    V = fam.V0 if V is None else V
    P = fam.matrix(u) if isinstance(fam, KernelFamily) else np.asarray(getattr(fam, "matrix", fam))
    pi = stationary_vector(P)
    x0 = default_x0(V) if x0 is None else x0
    d = decay_curve(P, pi, V, x0, n_max)
    valid = np.flatnonzero(d > floor)
    if valid.size == 0 or valid[0] != 0:
        raise ExactlyCoupled("decay curve at u=%g is below %g at n=1" % (u, floor))
    last = valid[0]
    while last + 1 < n_max and d[last + 1] > floor:
        last += 1
    if last >= 1 and d[1] > fit_floor:
        while d[last] <= fit_floor:
            last -= 1
    n = np.arange(1, last + 2)
    logd = np.log(d[:last + 1])
    if n.size >= 4:
        start = n.size // 2
        n, logd = n[start:], logd[start:]
    if n.size == 1:
        return DecayFit(float(u), float(d[0]), 1.0, 0.0, (1, 1))
    slope, intercept = np.polyfit(n, logd, 1)
    resid = logd - (slope * n + intercept)
    return DecayFit(float(u), float(np.exp(slope)), float(np.exp(intercept)),
                    float(np.sqrt(np.mean(resid ** 2))), (int(n[0]), int(n[-1])))


def simultaneous_sweep(fam, V=None, u_grid=None, n_max=200, x0=None):
    """``(sup_u kappa_hat, sup_u C_hat, fits)``; exactly coupled points report ``kappa_hat = 0``."""
    u_grid = np.linspace(0, 1, 11) if u_grid is None else u_grid
    fits = []
    for u in u_grid:
        try:
            fits.append(fit_geometric_decay(fam, u, V, x0, n_max))
        except ExactlyCoupled:
            fits.append(DecayFit(float(u), 0.0, 0.0, 0.0, (1, 1), True))
    return max(f.kappa_hat for f in fits), max(f.C_hat for f in fits), fits


def report_csv(fits: List[DecayFit], certs=None):
    """CSV with columns ``u, kappa_hat, C_hat, residual, lambda, b, eta, r``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "kappa_hat", "C_hat", "residual", "lambda", "b", "eta", "r"])
    certs = certs or {}
    for f in fits:
        c = certs.get(f.u)
        extra = [repr(c.lam), repr(c.b), repr(c.eta), repr(c.r)] if c is not None else ["", "", "", ""]
        w.writerow([repr(f.u), repr(f.kappa_hat), repr(f.C_hat), repr(f.residual)] + extra)
    return buf.getvalue()
