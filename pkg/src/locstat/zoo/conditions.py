"""Numerical evaluation of the sufficient conditions on drift and derivative growth."""

import numpy as np

from ..ergodicity import find_drift_constants, window_product, window_tuples
from ..measure import KernelFamily


def _phi_powers(fam: KernelFamily):
    """Return ``W(d)``: ``x -> sum_i phi(x_i)^d`` on the family's state space."""
    phi = fam.meta.get("phi")
    if phi is None:
        return lambda d: np.ones(fam.size)
    phi = np.asarray(phi, dtype=float)
    p = fam.meta.get("p", 1)
    if p == 1:
        return lambda d: phi ** d
    m = phi.shape[0]
    idx = np.indices((m,) * p).reshape(p, -1)
    return lambda d: (phi[idx] ** d).sum(axis=0)


def _drift_block(fam, V, u_grid, m, eps, n_windows, seed):
    tuples = [tuple([float(u)] * m) for u in u_grid]
    tuples += window_tuples(max(m, 2), eps, n_windows, seed, include_diagonal=False)
    worst = None
    K = 0.0
    for us in tuples:
        P = window_product(fam, us)
        cert = find_drift_constants(P, V, m=len(us), u=us)
        if cert is None:
            return {"passed": False, "where": list(us)}
        if worst is None or cert.r > worst.r:
            worst = cert
    for u in u_grid:
        K = max(K, float(np.max((fam.matrix(u) @ V) / V)))
    return {"passed": True, "lambda": worst.lam, "b": worst.b, "r": worst.r, "eta": worst.eta,
            "worst_u": list(worst.u), "K": K}


def sc_condition_report(fam: KernelFamily, d0, d1, q, k, u_grid=None, m=1, eps=0.1, n_windows=4,
                        seed=0, exponential=None):
    """Evaluate the drift condition, the derivative-growth constants and, optionally,
    the exponential-weight variant.

    Parameters
    ----------
    fam : KernelFamily
        ``fam.meta["phi"]`` (and ``fam.meta["p"]`` for vectorized chains) define
        ``phi``; without it ``phi == 1``.
    d0, d1, q, k : float, float, float, int
        Exponents of the power weights ``phi^d``; requires ``d1 + k q <= d0``.
    exponential : dict, optional
        ``{"kappa": k}`` for TvAR families: checks drift with ``V = exp(k'|y|)``.

    Returns
    -------
    dict
        One entry per condition with ``passed`` and the worst location.
    """
    u_grid = np.linspace(0, 1, 11) if u_grid is None else np.asarray(u_grid, float)
    W = _phi_powers(fam)
    report = {"params": {"d0": d0, "d1": d1, "q": q, "k": k}}
    report["exponents"] = {"passed": bool(d1 + k * q <= d0 + 1e-12 and d1 > 0 and q >= 0)}
    report["SC1"] = _drift_block(fam, W(d0), u_grid, m, eps, n_windows, seed)
    consts = {}
    ok = True
    kk = min(k, fam.order_k)
    for ell in range(1, kk + 1):
        ds = sorted({0.0} | {d1 + s * q for s in range(0, kk - ell + 1)})
        for d in ds:
            num_w = W(d)
            den_w = W(d + q * ell)
            best, where = 0.0, None
            for u in u_grid:
                D = fam.deriv(u, ell)
                ratio = (np.abs(D) @ num_w) / den_w
                i = int(np.argmax(ratio))
                if ratio[i] > best:
                    best, where = float(ratio[i]), (float(u), i)
            finite = bool(np.isfinite(best))
            ok &= finite
            consts["l=%d,d=%g" % (ell, d)] = {"C": best, "worst": where, "passed": finite}
    report["SC3"] = {"passed": ok, "constants": consts}
    if exponential is not None:
        report["exponential"] = _exponential_block(fam, exponential, u_grid)
    report["passed"] = bool(report["exponents"]["passed"] and report["SC1"]["passed"] and ok and
                            report.get("exponential", {"passed": True})["passed"])
    return report


def exponential_kappa_prime(kappa, beta_bar, sigma_plus, shrink=0.5):
    """``kappa' = shrink * min(kappa, kappa (1 - beta_bar) / sigma_plus)``."""
    return shrink * min(kappa, kappa * (1 - beta_bar) / sigma_plus)


def _exponential_block(fam, spec, u_grid):
    model = fam.meta.get("model")
    if model is None or not hasattr(model, "sigma"):
        return {"passed": False, "reason": "exponential option needs a TvAR family"}
    kappa = float(spec["kappa"])
    radius = model.noise.exp_moment_radius()
    if kappa >= radius and not np.isinf(radius):
        return {"passed": False, "reason": "noise has no exponential moment of order %g" % kappa}
    if radius == 0:
        return {"passed": False, "reason": "noise has no exponential moments"}
    us = np.linspace(0, 1, 101)
    beta_bar = max(model.m_fun.beta(u) for u in us)
    sigma_plus = max(model.sigma(u) for u in us)
    kp = spec.get("kappa_prime") or exponential_kappa_prime(kappa, beta_bar, sigma_plus)
    phi_base = np.asarray(fam.meta["phi"], float) - 1.0  # |y|
    p = fam.meta.get("p", 1)
    if p == 1:
        V = np.exp(kp * phi_base)
    else:
        m = phi_base.shape[0]
        idx = np.indices((m,) * p).reshape(p, -1)
        V = np.exp(kp * phi_base[idx]).sum(axis=0)
    worst = None
    for u in u_grid:
        cert = find_drift_constants(fam.matrix(u), V, u=(float(u),))
        if cert is None:
            return {"passed": False, "kappa_prime": kp, "where": float(u)}
        if worst is None or cert.r > worst.r:
            worst = cert
    return {"passed": True, "kappa_prime": kp, "beta_bar": beta_bar, "sigma_plus": sigma_plus,
            "lambda": worst.lam, "b": worst.b, "r": worst.r, "eta": worst.eta}
