"""smlab: spectral multipliers and vector-valued maximal operators on finite spaces of homogeneous type.

The functional API lives in the submodules :mod:`smlab.space`,
:mod:`smlab.dyadic`, :mod:`smlab.lattice`, :mod:`smlab.maximal`,
:mod:`smlab.spectral` and :mod:`smlab.estimates`; :mod:`smlab.estimators`
wraps parts of it in scikit-learn style estimators and :mod:`smlab.cli`
provides the ``smlab`` command.
"""

from ._validation import ValidationError
from .dyadic import build_adjacent_family, build_dyadic_system, verify_dyadic
from .estimates import cz_decompose, fit_gaussian
from .lattice import LatticeSpec, alpha, alpha_tilde
from .maximal import dimension_sweep, m_hl, m_hl_q, norm_probe
from .space import MetricMeasureSpace, build_model_space, doubling_constant
from .spectral import (
    Multiplier,
    apply_multiplier,
    build_operator,
    hormander_norm,
    semigroup_kernel,
    spectral_decompose,
)

__version__ = "0.1.0"

__all__ = [
    "ValidationError",
    "MetricMeasureSpace",
    "build_model_space",
    "doubling_constant",
    "build_dyadic_system",
    "verify_dyadic",
    "build_adjacent_family",
    "LatticeSpec",
    "alpha",
    "alpha_tilde",
    "m_hl",
    "m_hl_q",
    "norm_probe",
    "dimension_sweep",
    "Multiplier",
    "spectral_decompose",
    "apply_multiplier",
    "semigroup_kernel",
    "hormander_norm",
    "build_operator",
    "fit_gaussian",
    "cz_decompose",
]
