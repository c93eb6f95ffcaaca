"""Build families from JSON model blocks.

A block names a ``family`` and supplies curves as
``{"type": "poly" | "sin", "coeffs": [...]}``. Continuous-state and count
models also keep their native description so they can be sampled without
discretization.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ..measure import ContractViolation, KernelFamily
from .curves import Curve
from .doeblin import build_doeblin, doeblin_sine
from .inar import INARModel, PmfCurve, build_inar, default_truncation
from .mixture import constant_family, random_smooth, two_state
from .noise import Noise
from .random_env import RandomEnvLogisticModel, build_random_env
from .tvar import Discretizer, LinearAR, ThresholdAR, TvARModel, ar1_example, build_tvar

FAMILIES = ("two_state", "random_smooth", "constant", "doeblin", "tvar", "inar", "inarch", "random_env")


class ModelSpecError(ContractViolation):
    """A model block is malformed; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__("%s: %s" % (field, message))
        self.field = field


@dataclass(frozen=True, eq=False)
class BuiltModel:
    family: KernelFamily
    native: Optional[Any]
    spec: dict
    discretized: bool = False

    @property
    def sampler_model(self):
        """What :mod:`locstat.simulate` should sample: the native model when there is one."""
        return self.native if self.native is not None else self.family


def _curve(spec, name, default=None):
    curves = spec.get("curves", {})
    if name not in curves:
        if default is None:
            raise ModelSpecError("model.curves.%s" % name, "required curve is missing")
        return default
    c = curves[name]
    field = "model.curves.%s" % name
    if not isinstance(c, dict) or c.get("type") not in ("poly", "sin"):
        raise ModelSpecError(field + ".type", "must be 'poly' or 'sin'")
    co = c.get("coeffs")
    if not isinstance(co, (list, tuple)) or not co or not all(isinstance(v, (int, float)) for v in co):
        raise ModelSpecError(field + ".coeffs", "must be a non-empty list of numbers")
    if c["type"] == "sin" and len(co) > 4:
        raise ModelSpecError(field + ".coeffs", "a sinusoid takes at most 4 coefficients")
    return Curve.from_json(c)


def _disc(spec, L=8.0, bins=201):
    d = spec.get("discretizer", {})
    return Discretizer(float(d.get("L", L)), int(d.get("bins", bins)), d.get("quadrature", "gauss5"))


def tvar_model(spec):
    p = int(spec.get("p", 1))
    mspec = spec.get("m", {"type": "linear"})
    kind = mspec.get("type", "linear")
    c = _curve(spec, "c", Curve.const(0.0)) if "c" in spec.get("curves", {}) else None
    if kind == "linear":
        m_fun = LinearAR(tuple(_curve(spec, "a%d" % (i + 1)) for i in range(p)), c)
    elif kind == "threshold":
        if p != 1:
            raise ModelSpecError("model.p", "threshold models are first order")
        m_fun = ThresholdAR(_curve(spec, "a1"), _curve(spec, "a2"), float(mspec.get("threshold", 0.0)), c)
    else:
        raise ModelSpecError("model.m.type", "must be 'linear' or 'threshold'")
    return TvARModel(m_fun, _curve(spec, "sigma", Curve.const(1.0)), Noise.from_json(spec.get("noise")),
                     float(spec.get("d0", 4.0)), float(spec.get("q", 1.0)))


def inar_model(spec, kind):
    p = int(spec.get("p", 1))
    N = int(spec.get("truncation_N", 0) or 0)
    if kind == "inar":
        thin = tuple(PmfCurve("bernoulli", _curve(spec, "alpha%d" % (i + 1))) for i in range(p))
        imm = PmfCurve("poisson", _curve(spec, "lambda"))
    else:
        thin = tuple(PmfCurve("poisson", _curve(spec, "alpha%d" % (i + 1))) for i in range(p))
        imm = PmfCurve("poisson", _curve(spec, "alpha0"))
    return INARModel(thin, imm, N)


def suggested_truncation(spec):
    """``(N_given, N_floor)`` for count models: the default truncation rule applied to the model."""
    model = inar_model(spec, spec["family"])
    return model.truncation_N, default_truncation(model.alpha(), model.immigration_mean())


def build_model(spec: dict) -> BuiltModel:
    """Construct the family described by ``spec``.

    Raises
    ------
    ModelSpecError
        Unknown family or malformed field.
    """
    fam_name = spec.get("family")
    if fam_name not in FAMILIES:
        raise ModelSpecError("model.family", "must be one of %s" % ", ".join(FAMILIES))
    k = int(spec.get("k", 3))
    if fam_name == "two_state":
        return BuiltModel(two_state(_curve(spec, "a", Curve.poly(0.3, 0.4)),
                                    _curve(spec, "b", Curve.poly(0.5, -0.2)), k), None, spec)
    if fam_name == "random_smooth":
        return BuiltModel(random_smooth(int(spec.get("m_states", 5)), int(spec.get("seed", 0)), k), None, spec)
    if fam_name == "constant":
        if "matrix" not in spec:
            raise ModelSpecError("model.matrix", "required for a constant family")
        return BuiltModel(constant_family(np.array(spec["matrix"], dtype=float), k), None, spec)
    if fam_name == "doeblin":
        model = doeblin_sine(int(spec.get("m_states", 4)), float(spec.get("amp", 0.3)), int(spec.get("seed", 0)))
        return BuiltModel(build_doeblin(model, k), None, spec)
    if fam_name == "tvar":
        model = tvar_model(spec)
        return BuiltModel(build_tvar(model, _disc(spec), min(k, 3)), model, spec, True)
    if fam_name in ("inar", "inarch"):
        model = inar_model(spec, fam_name)
        return BuiltModel(build_inar(model, k, model.truncation_N or None), model, spec)
    env_spec = spec.get("env", {})
    env = ar1_example(_curve({"curves": env_spec.get("curves", {})}, "a", Curve.poly(0.4, 0.2)),
                      **_disc_kwargs(env_spec), k=min(k, 3))
    model = RandomEnvLogisticModel(_curve(spec, "a0", Curve.poly(-0.5, 0.5)), _curve(spec, "a1", Curve.sin(0.8, 0.3)),
                                   _curve(spec, "beta", Curve.poly(0.4, -0.2)), env)
    return BuiltModel(build_random_env(model, min(k, 3)), None, spec, True)


def _disc_kwargs(spec):
    d = _disc(spec, 7.0, 21)
    return {"L": d.L, "bins": d.bins, "quadrature": d.quadrature}
