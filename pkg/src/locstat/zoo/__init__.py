"""Model families: finite mixtures, Doeblin kernels, binned autoregressions,
integer-valued autoregressions and a binary chain in a random environment."""

from .conditions import sc_condition_report
from .curves import Curve, ModelInvariantViolated, faa_di_bruno
from .doeblin import DoeblinModel, build_doeblin, doeblin_sine
from .inar import (INARModel, PmfCurve, build_inar, conv_bundle, default_truncation, inar1_example,
                   inarch_direct_rows, inarch_model)
from .mixture import constant_family, curve_mixture, random_smooth, two_state, two_state_pi
from .noise import Noise
from .porder import POrderKernel, p_order_vectorize
from .random_env import RandomEnvLogisticModel, build_random_env, random_env_example
from .tvar import (Discretizer, LinearAR, ThresholdAR, TruncationTooCoarse, TvARModel, ar1_example,
                   build_tvar, setar_example)
from .config import FAMILIES, BuiltModel, ModelSpecError, build_model
