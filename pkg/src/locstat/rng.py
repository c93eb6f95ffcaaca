"""Counter-based uniforms keyed by (seed, phase, t, replicate, draw).

The block function is Philox4x64-10, bit-identical to ``numpy.random.Philox``
(numpy pre-increments its counter, so numpy's first block for counter ``c`` is
our block for ``c + 1``). Each call is a pure function of its key, which makes
simulated paths independent of chunking, worker count and execution order.

Counter words: ``(draw // 4, t, replicate, phase)``; key: ``(seed, TAG)``.
Draw ``d`` uses output lane ``d % 4``.
"""

import numpy as np

from ._accel import njit

TAG = np.uint64(0x4C534D43)  # "LSMC"

PHASE_MAIN = 0
PHASE_INIT = 1
PHASE_BURN = 2
PHASE_STATIONARY = 3

_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_MASK32 = 0xFFFFFFFF
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & np.uint64(_MASK32)
    a_hi = a >> np.uint64(32)
    b_lo = b & np.uint64(_MASK32)
    b_hi = b >> np.uint64(32)
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> np.uint64(32)) + (lh & np.uint64(_MASK32)) + (hl & np.uint64(_MASK32))
    hi = hh + (lh >> np.uint64(32)) + (hl >> np.uint64(32)) + (mid >> np.uint64(32))
    lo = a * b
    return hi, lo


@njit
def philox_block(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block; all arguments are ``np.uint64``."""
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    w0 = np.uint64(_W0)
    w1 = np.uint64(_W1)
    for r in range(10):
        if r > 0:
            k0 = k0 + w0
            k1 = k1 + w1
        hi0, lo0 = _mulhilo(m0, c0)
        hi1, lo1 = _mulhilo(m1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit
def uniform_at(seed, phase, t, rep, draw):
    """Uniform on the open interval (0, 1) for one counter position."""
    o0, o1, o2, o3 = philox_block(
        np.uint64(draw // 4), np.uint64(t), np.uint64(rep), np.uint64(phase),
        np.uint64(seed), TAG,
    )
    lane = draw % 4
    if lane == 0:
        x = o0
    elif lane == 1:
        x = o1
    elif lane == 2:
        x = o2
    else:
        x = o3
    return (float(x >> np.uint64(11)) + 0.5) * _INV53


def _mulhilo_np(a, b):
    m32 = np.uint64(_MASK32)
    s32 = np.uint64(32)
    a_lo, a_hi = a & m32, a >> s32
    b_lo, b_hi = b & m32, b >> s32
    ll, lh, hl, hh = a_lo * b_lo, a_lo * b_hi, a_hi * b_lo, a_hi * b_hi
    mid = (ll >> s32) + (lh & m32) + (hl & m32)
    hi = hh + (lh >> s32) + (hl >> s32) + (mid >> s32)
    return hi, a * b


def philox_block_np(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox4x64-10 over uint64 arrays (broadcasting)."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    m0, m1 = np.uint64(_M0), np.uint64(_M1)
    with np.errstate(over="ignore"):
        for r in range(10):
            if r > 0:
                k0 = np.uint64((int(k0) + _W0) & 0xFFFFFFFFFFFFFFFF)
                k1 = np.uint64((int(k1) + _W1) & 0xFFFFFFFFFFFFFFFF)
            hi0, lo0 = _mulhilo_np(m0, c0)
            hi1, lo1 = _mulhilo_np(m1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def uniforms(seed, phase, t, reps, draw):
    """Vectorized :func:`uniform_at` over an array of replicate indices."""
    reps = np.asarray(reps, dtype=np.uint64)
    draw = np.asarray(draw, dtype=np.int64)
    blocks = philox_block_np(
        (draw // 4).astype(np.uint64), np.uint64(t), reps, np.uint64(phase),
        np.uint64(seed), TAG,
    )
    out = np.choose(draw % 4, blocks)
    return ((out >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def normalize_seed(seed):
    """Reduce any integer seed to an unsigned 64-bit key word."""
    return int(seed) & 0xFFFFFFFFFFFFFFFF
