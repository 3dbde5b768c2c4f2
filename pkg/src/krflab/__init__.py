"""
Numerical laboratory for the potential form of the Kähler-Ricci flow.

Two geometries are provided: CP^1 with its round metric, discretized by
spherical harmonics (:mod:`krflab.cp1`), and U(2)-invariant metrics on the
blow-up of CP^2 at a point in momentum coordinates (:mod:`krflab.calabi`).
"""

__version__ = "0.1.0"

from .cp1 import (  # noqa: E402
    AdmissibilityError,
    AutomorphismElement,
    CP1Geometry,
    HolomorphicField,
    PotentialField,
    build_geometry,
    gauge_potential,
    norms,
    pullback_potential,
    spectrum,
)
from .flow import FlowConfig, conservation_check, rate_fit, run_flow  # noqa: E402
from .functionals import k_energy_explicit, normalization_I, normalize_to_H0  # noqa: E402
from .mabuchi import project_IJ  # noqa: E402

__all__ = [
    "AdmissibilityError",
    "AutomorphismElement",
    "CP1Geometry",
    "HolomorphicField",
    "PotentialField",
    "build_geometry",
    "gauge_potential",
    "norms",
    "pullback_potential",
    "spectrum",
    "FlowConfig",
    "conservation_check",
    "rate_fit",
    "run_flow",
    "k_energy_explicit",
    "normalization_I",
    "normalize_to_H0",
    "project_IJ",
]
