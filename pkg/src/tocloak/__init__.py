"""Transformation-optics cloaking in two dimensions: media, solvers and verification."""

from .coeffs import (
    Annulus,
    BlockCoefficient,
    CoefficientField,
    CompositeField,
    Disk,
    constant_field,
    ellipticity_scan,
    identity_field,
    isotropic_field,
)
from .errors import (
    CloakError,
    DomainMismatchError,
    IncompatibleSourceError,
    MeshError,
    QuadratureError,
    ResonanceError,
    SingularPointError,
    SolverError,
)
from .radial import dtn_spectrum, find_resonance, mode_dtn, solve_radial_mode
from .xform import (
    DiffeoMap,
    affine_map,
    blowup_map,
    closed_form_radial_cloak,
    composed_map,
    conjugated_map,
    ellipse_map,
    identity_map,
    near_cloak_medium,
    pushforward_coefficients,
    pushforward_source,
    regularized_blowup,
    scaling_map,
)

__version__ = "0.1.0"
