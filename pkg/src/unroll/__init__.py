"""Developable surfaces spanned by a framed boundary curve.

A planar region and a framed curve along its boundary determine, when they
are compatible, a unique developable isometric immersion of the region.
This package checks admissibility, computes the bending energy as a boundary
line integral, constructs and verifies the immersion, and runs penalty
descent over families of framed curves.
"""
from .admissibility import AdmissibilityReport, Options, check_admissible, check_compatibility
from .boundary_region import BoundaryRegion, circle, polygon, rectangle
from .config import RunConfig, load_config, save_config
from .energy import EnergyReport, direct_energy, energy_density, mean_curvature, reduced_energy
from .errors import SchemaError, UnrollError
from .framed_curve import FramedCurve, SampledFramedCurve, frame_data, validate_framed
from .immersion import Immersion, RegularityReport, build_immersion, sample_mesh, verify_isometry
from .optimizer import CurveFamily, DescentOptions, DescentTrace, descend
from .presets import ADMISSIBLE, CATALOG, DEFECTS, Preset, make_preset
from .rulings import RulingField, sample_rulings

__version__ = "0.1.0"

__all__ = [
    "ADMISSIBLE", "CATALOG", "DEFECTS", "AdmissibilityReport", "BoundaryRegion", "CurveFamily", "DescentOptions",
    "DescentTrace", "EnergyReport", "FramedCurve", "Immersion", "Options", "Preset", "RegularityReport",
    "RulingField", "RunConfig", "SampledFramedCurve", "SchemaError", "UnrollError", "build_immersion",
    "check_admissible", "check_compatibility", "circle", "descend", "direct_energy", "energy_density",
    "frame_data", "load_config", "make_preset", "mean_curvature", "polygon", "rectangle", "reduced_energy",
    "sample_mesh", "sample_rulings", "save_config", "validate_framed", "verify_isometry",
]
