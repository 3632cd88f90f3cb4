"""Thermal two-point functions of free fields and numerical cone scans."""

__version__ = "0.1.0"

from .minkowski import (  # noqa: F401
    CausalClass,
    CausalKind,
    FourCovector,
    FourVector,
    Orientation,
    classify_causal,
    dirac_weight,
    lorentz_square,
    pair,
    shell_energy,
)
