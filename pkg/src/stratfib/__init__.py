"""Numerical study of polynomial maps on stratified sets.

Estimates the set of values over which a polynomial map restricted to a
stratified set can fail to be a locally trivial fibration, and checks
triviality over boxes by integrating lifted vector fields.
"""

__version__ = "0.1.0"

from .algebra import Polynomial, PolyMap, jacobian, newton_project, poly_eval
from .critical import (
    LimitValueSet,
    Schedule,
    find_safe_radius,
    k_infinity_estimate,
    milnor_sample,
    s_infinity_estimate,
    sigma_set,
    sing_values_sample,
)
from .geometry import Subspace, nu_min_singular, subspace_delta, tangent_space
from .strata import Box, Stratification, Stratum
from .trivialize import (
    FieldSpec,
    bump,
    glued_field,
    integrate_flow,
    plain_lift,
    sphere_tangent_lift,
    trivialize_box,
)

__all__ = [
    "Box",
    "FieldSpec",
    "LimitValueSet",
    "PolyMap",
    "Polynomial",
    "Schedule",
    "Stratification",
    "Stratum",
    "Subspace",
    "bump",
    "find_safe_radius",
    "glued_field",
    "integrate_flow",
    "jacobian",
    "k_infinity_estimate",
    "milnor_sample",
    "newton_project",
    "nu_min_singular",
    "plain_lift",
    "poly_eval",
    "s_infinity_estimate",
    "sigma_set",
    "sing_values_sample",
    "sphere_tangent_lift",
    "subspace_delta",
    "tangent_space",
    "trivialize_box",
]
