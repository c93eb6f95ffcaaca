"""Noise densities with derivatives up to order 3 and exact distribution functions."""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from ..measure import ContractViolation

NOISE_IDS = {"gaussian": 0, "student_t": 1, "logistic": 2}
MAX_ORDER = 3


@dataclass(frozen=True)
class Noise:
    """Standard noise law; ``nu`` is only used by ``student_t``."""

    kind: str = "gaussian"
    nu: float = 5.0

    def __post_init__(self):
        if self.kind not in NOISE_IDS:
            raise ContractViolation("unknown noise %r (choose from %s)" % (self.kind, sorted(NOISE_IDS)))
        if self.kind == "student_t" and self.nu <= 0:
            raise ContractViolation("student_t needs nu > 0")

    @classmethod
    def from_json(cls, spec):
        spec = spec or {}
        return cls(spec.get("type", "gaussian"), float(spec.get("nu", 5.0)))

    @property
    def code(self):
        return NOISE_IDS[self.kind]

    def derivs(self, z, k):
        """``[f(z), f'(z), ..., f^(k)(z)]`` for ``k <= 3``."""
        if k > MAX_ORDER:
            raise ContractViolation("noise derivatives are implemented up to order 3")
        z = np.asarray(z, dtype=float)
        if self.kind == "gaussian":
            f = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
            out = [f, -z * f, (z * z - 1) * f, -(z ** 3 - 3 * z) * f]
        elif self.kind == "logistic":
            s = special.expit(z)
            f = s * (1 - s)
            t = 1 - 2 * s
            out = [f, f * t, f * t * t - 2 * f * f, f * t ** 3 - 8 * f * f * t]
        else:
            nu = self.nu
            f = stats.t.pdf(z, nu)
            w = nu + z * z
            g1 = -(nu + 1) * z / w
            g2 = -(nu + 1) * (nu - z * z) / w ** 2
            g3 = 2 * (nu + 1) * z * (3 * nu - z * z) / w ** 3
            out = [f, f * g1, f * (g2 + g1 * g1), f * (g3 + 3 * g1 * g2 + g1 ** 3)]
        return out[:k + 1]

    def pdf(self, z):
        return self.derivs(z, 0)[0]

    def cdf(self, z):
        if self.kind == "gaussian":
            return special.ndtr(z)
        if self.kind == "logistic":
            return special.expit(z)
        return stats.t.cdf(z, self.nu)

    def sf(self, z):
        return self.cdf(-np.asarray(z, dtype=float))

    def abs_mean(self):
        """``E|eps|``."""
        if self.kind == "gaussian":
            return float(np.sqrt(2 / np.pi))
        if self.kind == "logistic":
            return float(2 * np.log(2))
        if self.nu <= 1:
            return float("inf")
        return float(stats.t.expect(np.abs, args=(self.nu,)))

    def variance(self):
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "logistic":
            return float(np.pi ** 2 / 3)
        return float(self.nu / (self.nu - 2)) if self.nu > 2 else float("inf")

    def exp_moment_radius(self):
        """Largest ``kappa`` with ``E exp(kappa |eps|) < inf`` (open bound)."""
        return {"gaussian": float("inf"), "logistic": 1.0, "student_t": 0.0}[self.kind]

    def moment_integral(self, power, s, L=None):
        """``int |y|^power |f^(s)(y)| dy`` by quadrature plus a tail extrapolation.

        The tail beyond ``L`` is extrapolated from the local log-log slope of
        the integrand; a slope ``>= -1`` means the integral diverges and
        ``inf`` is returned.
        """
        def g(y):
            return np.abs(y) ** power * np.abs(self.derivs(y, s)[s])

        if L is None:
            L = 40.0 if self.kind != "student_t" else 200.0
        core = 2 * integrate.quad(g, 0, L, limit=400, epsabs=1e-13)[0]
        y1, y2 = L, 2 * L
        g1, g2 = g(y1), g(y2)
        if g2 <= 0 or g1 <= 0:
            return float(core)
        slope = np.log(g2 / g1) / np.log(y2 / y1)
        if self.kind != "student_t":
            # exponential tails: geometric extrapolation is negligible
            return float(core)
        if slope >= -1 + 1e-6:
            return float("inf")
        tail = g1 * y1 / (-(slope + 1))
        return float(core + 2 * tail)
