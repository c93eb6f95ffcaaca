"""Reproducible sampling of triangular arrays and stationary comparison chains.

Every random number is a pure function of ``(seed, phase, t, replicate,
draw)`` (see :mod:`locstat.rng`), so paths do not depend on chunking or on
the order in which replicates are processed. Finite families step by
inverse-CDF; TvAR and INAR models are sampled natively (noise draws and
thinning), without discretization.
"""

import csv
import io
import struct
from dataclasses import dataclass
from math import ceil, log
from typing import Any, Optional

import numpy as np

from . import rng
from ._accel import USE_NUMBA, njit
from .measure import ContractViolation, KernelFamily
from .oracle import stationary_vector
from .rng import PHASE_BURN, PHASE_INIT, PHASE_MAIN, PHASE_STATIONARY, uniform_at, uniforms
from .zoo.inar import INARModel
from .zoo.tvar import LinearAR, ThresholdAR, TvARModel

MAGIC = b"LSMC1"
INIT_BIAS = 1e-9


@dataclass(frozen=True, eq=False)
class SimulationPlan:
    n: int
    replicates: int
    seed: int
    model: Any
    burn_in: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.replicates < 1:
            raise ContractViolation("n and replicates must be positive")
        object.__setattr__(self, "seed", rng.normalize_seed(self.seed))


def burn_in_for(kappa_hat, tol=INIT_BIAS, minimum=20):
    """``ceil(log(tol) / log(kappa_hat))``, at least ``minimum``."""
    if kappa_hat <= 0:
        return minimum
    if kappa_hat >= 1:
        raise ContractViolation("burn-in needs a decay rate below 1")
    return max(minimum, int(ceil(log(tol) / log(kappa_hat))))


def default_burn_in(model):
    if isinstance(model, KernelFamily):
        from .ergodicity import ExactlyCoupled, fit_geometric_decay

        try:
            return burn_in_for(fit_geometric_decay(model, 0.0).kappa_hat)
        except ExactlyCoupled:
            return burn_in_for(0.0)
    if isinstance(model, TvARModel):
        return burn_in_for(max(model.m_fun.beta(0.0), 0.5)) * max(1, model.p)
    if isinstance(model, INARModel):
        return burn_in_for(max(sum(z.mean(0.0) for z in model.thinning), 0.5)) * max(1, model.p)
    raise ContractViolation("unsupported model type %r" % type(model).__name__)


# -- finite families -------------------------------------------------------

def _cdf(P):
    C = np.cumsum(np.asarray(P, dtype=float), axis=-1)
    C[..., -1] = 1.0
    return np.ascontiguousarray(C)


@njit
def _finite_step_numba(prev, C, seed, phase, t, rep0, out):
    m = C.shape[1]
    for r in range(prev.shape[0]):
        u = uniform_at(seed, phase, t, rep0 + r, 0)
        row = C[prev[r]]
        lo, hi = 0, m
        while lo < hi:  # first index with row > u
            mid = (lo + hi) // 2
            if row[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        out[r] = min(lo, m - 1)


def _finite_step_numpy(prev, C, seed, phase, t, rep0, out, chunk=8192):
    m = C.shape[1]
    R = prev.shape[0]
    for lo in range(0, R, chunk):
        sl = slice(lo, min(R, lo + chunk))
        u = uniforms(seed, phase, t, np.arange(rep0 + sl.start, rep0 + sl.stop), 0)
        rows = C[prev[sl]]
        out[sl] = np.minimum((rows <= u[:, None]).sum(axis=1), m - 1)


def _finite_init(pi, seed, phase, t, rep0, R):
    """Inverse-CDF draws from ``pi`` (shares the stepping kernel)."""
    C = _cdf(pi)[None, :]
    out = np.empty(R, dtype=np.int64)
    finite_step(np.zeros(R, dtype=np.int64), C, seed, phase, t, rep0, out)
    return out


def finite_step(prev, C, seed, phase, t, rep0, out, use_numba=None):
    use = USE_NUMBA if use_numba is None else use_numba
    if use:
        _finite_step_numba(prev, C, np.uint64(seed), phase, t, rep0, out)
    else:
        _finite_step_numpy(prev, C, seed, phase, t, rep0, out)


def _simulate_finite(fam, n, R, seed, rep0=0, use_numba=None, u_fixed=None, phase=PHASE_MAIN):
    paths = np.empty((R, n + 1), dtype=np.int64)
    if u_fixed is None:
        pi0 = stationary_vector(fam.matrix(0.0))
        init_phase = PHASE_INIT
    else:
        P = fam.matrix(u_fixed)
        pi0 = stationary_vector(P)
        C_fixed = _cdf(P)
        init_phase = phase
    C0 = _cdf(pi0)[None, :]
    finite_step(np.zeros(R, dtype=np.int64), C0, seed, init_phase, 0, rep0, paths[:, 0], use_numba)
    for t in range(1, n + 1):
        C = C_fixed if u_fixed is not None else _cdf(fam.matrix(t / n))
        out = np.empty(R, dtype=np.int64)
        finite_step(paths[:, t - 1].copy(), C, seed, phase, t, rep0, out, use_numba)
        paths[:, t] = out
    return paths


# -- native TvAR -----------------------------------------------------------

@njit
def _noise_numba(kind, nu, seed, phase, t, rep):
    if kind == 0:
        u1 = uniform_at(seed, phase, t, rep, 0)
        u2 = uniform_at(seed, phase, t, rep, 1)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    if kind == 2:
        u1 = uniform_at(seed, phase, t, rep, 0)
        return np.log(u1 / (1.0 - u1))
    d = 0
    while True:
        a = 2.0 * uniform_at(seed, phase, t, rep, d) - 1.0
        b = 2.0 * uniform_at(seed, phase, t, rep, d + 1) - 1.0
        d += 2
        w = a * a + b * b
        if w <= 1.0:
            return a * np.sqrt(nu * (w ** (-2.0 / nu) - 1.0) / w)


def _noise_numpy(kind, nu, seed, phase, t, reps):
    if kind == 0:
        u1 = uniforms(seed, phase, t, reps, 0)
        u2 = uniforms(seed, phase, t, reps, 1)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    if kind == 2:
        u1 = uniforms(seed, phase, t, reps, 0)
        return np.log(u1 / (1.0 - u1))
    out = np.empty(reps.shape[0])
    todo = np.arange(reps.shape[0])
    d = 0
    while todo.size:
        a = 2.0 * uniforms(seed, phase, t, reps[todo], d) - 1.0
        b = 2.0 * uniforms(seed, phase, t, reps[todo], d + 1) - 1.0
        w = a * a + b * b
        ok = w <= 1.0
        out[todo[ok]] = a[ok] * np.sqrt(nu * (w[ok] ** (-2.0 / nu) - 1.0) / w[ok])
        todo = todo[~ok]
        d += 2
    return out


def _tvar_params(model, us):
    """Per-step arrays: ``kind`` (0 linear, 1 threshold), coefficient table, intercept, sigma."""
    mf = model.m_fun
    p = model.p
    if isinstance(mf, LinearAR):
        kind = 0
        A = np.array([[a(u) for a in mf.coefs] for u in us]).reshape(len(us), p)
        thr = 0.0
    elif isinstance(mf, ThresholdAR):
        kind = 1
        A = np.array([[mf.a1(u), mf.a2(u)] for u in us])
        thr = float(mf.threshold)
    else:
        raise ContractViolation("native sampling supports LinearAR and ThresholdAR")
    c = np.array([0.0 if mf.intercept is None else mf.intercept(u) for u in us])
    sig = np.array([model.sigma(u) for u in us])
    return kind, np.ascontiguousarray(A), thr, c, sig


@njit
def _tvar_numba(hist, kind, A, thr, c, sig, noise_kind, nu, seed, phase, t0, rep0, out):
    """Advance ``hist`` (R, p) over ``A.shape[0]`` steps, writing the new states to ``out``."""
    R, p = hist.shape
    T = A.shape[0]
    for r in range(R):
        for s in range(T):
            if kind == 0:
                mval = c[s]
                for i in range(p):
                    mval += A[s, i] * hist[r, p - 1 - i]
            else:
                x = hist[r, p - 1] - thr
                mval = c[s] + (A[s, 0] * x if x > 0 else -A[s, 1] * x)
            e = _noise_numba(noise_kind, nu, seed, phase, t0 + s, rep0 + r)
            y = mval + sig[s] * e
            for i in range(p - 1):
                hist[r, i] = hist[r, i + 1]
            hist[r, p - 1] = y
            out[r, s] = y


def _tvar_numpy(hist, kind, A, thr, c, sig, noise_kind, nu, seed, phase, t0, rep0, out):
    R, p = hist.shape
    reps = np.arange(rep0, rep0 + R, dtype=np.uint64)
    for s in range(A.shape[0]):
        if kind == 0:
            mval = c[s] + hist[:, ::-1] @ A[s]
        else:
            x = hist[:, p - 1] - thr
            mval = c[s] + np.where(x > 0, A[s, 0] * x, -A[s, 1] * x)
        e = _noise_numpy(noise_kind, nu, seed, phase, t0 + s, reps)
        y = mval + sig[s] * e
        hist[:, :-1] = hist[:, 1:]
        hist[:, -1] = y
        out[:, s] = y


def _tvar_run(model, us, hist, seed, phase, t0, rep0, use_numba):
    kind, A, thr, c, sig = _tvar_params(model, us)
    out = np.empty((hist.shape[0], len(us)))
    args = (hist, kind, A, thr, c, sig, model.noise.code, float(model.noise.nu))
    if (USE_NUMBA if use_numba is None else use_numba):
        _tvar_numba(*args, np.uint64(seed), phase, t0, rep0, out)
    else:
        _tvar_numpy(*args, seed, phase, t0, rep0, out)
    return out


def _simulate_tvar(model, n, R, seed, burn_in, rep0=0, use_numba=None, u_fixed=None):
    hist = np.zeros((R, model.p))
    if burn_in:
        u0 = 0.0 if u_fixed is None else u_fixed
        _tvar_run(model, [u0] * burn_in, hist, seed, PHASE_BURN, 0, rep0, use_numba)
    paths = np.empty((R, n + 1))
    paths[:, 0] = hist[:, -1]
    if u_fixed is None:
        us, phase = [t / n for t in range(1, n + 1)], PHASE_MAIN
    else:
        us, phase = [u_fixed] * n, PHASE_STATIONARY
    paths[:, 1:] = _tvar_run(model, us, hist, seed, phase, 1, rep0, use_numba)
    return paths


# -- native INAR -----------------------------------------------------------

@njit
def _poisson_inv(u, lam, e_lam):
    k = 0
    p = e_lam
    F = p
    while u > F and k < 100000:
        k += 1
        p *= lam / k
        F += p
    return k


@njit
def _inar_numba(hist, kinds, alpha, e_alpha, lam, e_lam, seed, phase, t0, rep0, out):
    """``X_t = sum_i alpha_i o X_{t-i} + eps_t``; Bernoulli (kind 0) or Poisson (kind 1) thinning."""
    R, p = hist.shape
    T = alpha.shape[0]
    for r in range(R):
        for s in range(T):
            d = 0
            y = _poisson_inv(uniform_at(seed, phase, t0 + s, rep0 + r, d), lam[s], e_lam[s])
            d += 1
            for i in range(p):
                x = hist[r, p - 1 - i]
                for _ in range(x):
                    v = uniform_at(seed, phase, t0 + s, rep0 + r, d)
                    d += 1
                    if kinds[i] == 0:
                        if v < alpha[s, i]:
                            y += 1
                    else:
                        y += _poisson_inv(v, alpha[s, i], e_alpha[s, i])
            for i in range(p - 1):
                hist[r, i] = hist[r, i + 1]
            hist[r, p - 1] = y
            out[r, s] = y


def _poisson_inv_np(u, lam, e_lam):
    k = np.zeros(u.shape[0], dtype=np.int64)
    p = np.full(u.shape[0], e_lam)
    F = p.copy()
    active = u > F
    while active.any():
        k[active] += 1
        p[active] *= lam / k[active]
        F[active] += p[active]
        active = u > F
    return k


def _inar_numpy(hist, kinds, alpha, e_alpha, lam, e_lam, seed, phase, t0, rep0, out):
    R, p = hist.shape
    reps = np.arange(rep0, rep0 + R, dtype=np.uint64)
    for s in range(alpha.shape[0]):
        y = _poisson_inv_np(uniforms(seed, phase, t0 + s, reps, 0), lam[s], e_lam[s])
        d = np.ones(R, dtype=np.int64)
        for i in range(p):
            x = hist[:, p - 1 - i]
            for j in range(int(x.max()) if R else 0):
                live = np.flatnonzero(x > j)
                v = uniforms(seed, phase, t0 + s, reps[live], d[live])
                d[live] += 1
                if kinds[i] == 0:
                    y[live] += (v < alpha[s, i]).astype(np.int64)
                else:
                    y[live] += _poisson_inv_np(v, alpha[s, i], e_alpha[s, i])
        hist[:, :-1] = hist[:, 1:]
        hist[:, -1] = y
        out[:, s] = y


def _inar_run(model, us, hist, seed, phase, t0, rep0, use_numba):
    kinds = np.array([0 if z.kind == "bernoulli" else 1 for z in model.thinning], dtype=np.int64)
    alpha = np.array([[z.mean(u) for z in model.thinning] for u in us]).reshape(len(us), model.p)
    e_alpha = np.exp(-alpha)
    if model.immigration.kind != "poisson":
        raise ContractViolation("native INAR sampling expects Poisson immigration")
    lam = np.array([model.immigration.mean(u) for u in us])
    e_lam = np.exp(-lam)
    out = np.empty((hist.shape[0], len(us)), dtype=np.int64)
    args = (hist, kinds, alpha, e_alpha, lam, e_lam)
    if (USE_NUMBA if use_numba is None else use_numba):
        _inar_numba(*args, np.uint64(seed), phase, t0, rep0, out)
    else:
        _inar_numpy(*args, seed, phase, t0, rep0, out)
    return out


def _simulate_inar(model, n, R, seed, burn_in, rep0=0, use_numba=None, u_fixed=None):
    hist = np.zeros((R, model.p), dtype=np.int64)
    if burn_in:
        u0 = 0.0 if u_fixed is None else u_fixed
        _inar_run(model, [u0] * burn_in, hist, seed, PHASE_BURN, 0, rep0, use_numba)
    paths = np.empty((R, n + 1), dtype=np.int64)
    paths[:, 0] = hist[:, -1]
    if u_fixed is None:
        us, phase = [t / n for t in range(1, n + 1)], PHASE_MAIN
    else:
        us, phase = [u_fixed] * n, PHASE_STATIONARY
    paths[:, 1:] = _inar_run(model, us, hist, seed, phase, 1, rep0, use_numba)
    return paths


# -- public API ------------------------------------------------------------

def _dispatch(model, n, R, seed, burn_in, rep0, use_numba, u_fixed):
    if isinstance(model, KernelFamily):
        phase = PHASE_MAIN if u_fixed is None else PHASE_STATIONARY
        return _simulate_finite(model, n, R, seed, rep0, use_numba, u_fixed, phase)
    if burn_in is None:
        burn_in = default_burn_in(model)
    if isinstance(model, TvARModel):
        return _simulate_tvar(model, n, R, seed, burn_in, rep0, use_numba, u_fixed)
    if isinstance(model, INARModel):
        return _simulate_inar(model, n, R, seed, burn_in, rep0, use_numba, u_fixed)
    raise ContractViolation("cannot simulate %r" % type(model).__name__)


def sample_triangular_array(plan: SimulationPlan, rep0=0, replicates=None, use_numba=None):
    """``(replicates, n+1)`` array of paths ``X_{n,0..n}``.

    Finite families start from an exact ``pi_0`` draw; native models burn in
    under ``Q_0``. ``rep0`` and ``replicates`` select a slice of replicate
    indices; any slicing yields the same rows as the full run.
    """
    R = plan.replicates if replicates is None else replicates
    return _dispatch(plan.model, plan.n, R, plan.seed, plan.burn_in, rep0, use_numba, None)


def sample_stationary_chain(model, u, length, plan: Optional[SimulationPlan] = None, seed=0,
                            replicates=1, use_numba=None):
    """Chains with the fixed kernel ``Q_u``: shape ``(replicates, length)``."""
    if length < 1:
        raise ContractViolation("length must be positive")
    seed = plan.seed if plan is not None else rng.normalize_seed(seed)
    burn = plan.burn_in if plan is not None else None
    if not isinstance(model, KernelFamily) and burn is None:
        burn = default_burn_in(model)
    return _dispatch(model, length - 1, replicates, seed, burn, 0, use_numba, float(u))


def sample_transitions(model, u, x, size, seed=0, use_numba=None):
    """``size`` independent draws from ``Q_u(x, .)`` for a native TvAR or INAR model.

    ``x`` is the lag vector ``(x_{t-p}, ..., x_{t-1})`` (a scalar when ``p = 1``).
    """
    seed = rng.normalize_seed(seed)
    x = np.atleast_1d(np.asarray(x))
    if x.shape[0] != model.p:
        raise ContractViolation("need %d lagged values, got %d" % (model.p, x.shape[0]))
    if isinstance(model, TvARModel):
        hist = np.tile(x.astype(float), (size, 1))
        return _tvar_run(model, [float(u)], hist, seed, PHASE_MAIN, 1, 0, use_numba)[:, 0]
    if isinstance(model, INARModel):
        hist = np.tile(x.astype(np.int64), (size, 1))
        return _inar_run(model, [float(u)], hist, seed, PHASE_MAIN, 1, 0, use_numba)[:, 0]
    raise ContractViolation("sample_transitions needs a native TvAR or INAR model")


def empirical_marginals(paths, m):
    """``(n+1, m)`` array of state frequencies per time index."""
    R, T = paths.shape
    out = np.zeros((T, m))
    for t in range(T):
        out[t] = np.bincount(paths[:, t], minlength=m)[:m] / R
    return out


# -- export ----------------------------------------------------------------

def paths_to_csv(paths):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "t", "state"])
    fmt = repr if paths.dtype.kind == "f" else str
    for r in range(paths.shape[0]):
        for t in range(paths.shape[1]):
            w.writerow([r, t, fmt(paths[r, t].item())])
    return buf.getvalue()


def write_binary(path, paths):
    """``b"LSMC1"``, little-endian ``u32 n``, ``u32 replicates``, then row-major i64 or f64 states.

    ``n`` is the horizon, so each row holds ``n + 1`` states.
    """
    paths = np.ascontiguousarray(paths)
    dtype = "<f8" if paths.dtype.kind == "f" else "<i8"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", paths.shape[1] - 1, paths.shape[0]))
        fh.write(paths.astype(dtype).tobytes())


def read_binary(path, dtype="i8"):
    """Inverse of :func:`write_binary`; the element type is not stored, so pass ``"i8"`` or ``"f8"``."""
    with open(path, "rb") as fh:
        if fh.read(5) != MAGIC:
            raise ContractViolation("not an LSMC1 file")
        n, R = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<" + dtype)
    if data.size != R * (n + 1):
        raise ContractViolation("LSMC1 payload has %d values, expected %d" % (data.size, R * (n + 1)))
    return data.reshape(R, n + 1)
