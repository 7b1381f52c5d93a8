import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from stratfib.algebra import Polynomial, PolyMap
from stratfib.errors import DomainError, InputError, MilnorPointError, SingularPointError
from stratfib.geometry import Subspace, sphere_tangent_intersection
from stratfib.strata import Box, Stratification
from stratfib.trivialize import (
    FieldSpec,
    _lift,
    bump,
    fiber_components,
    glued_field,
    integrate_flow,
    plain_lift,
    rugosity_check,
    sphere_tangent_lift,
    trivialize_box,
)

from conftest import var
from oracles import (
    broughton_fiber_component_count,
    circle_flow_endpoint,
    min_norm_kkt,
    sphere_tangent_lift_linear,
)

coord = st.floats(-50, 50, allow_nan=False)


def test_sphere_lift_matches_linear_oracle(linear, plane):
    V = sphere_tangent_lift(linear, plane["X"], [3.0, 4.0], 0)
    assert np.allclose(V, sphere_tangent_lift_linear(3.0, 4.0), atol=1e-12)


def test_sphere_lift_rejects_origin_and_milnor_points(linear, plane):
    with pytest.raises(DomainError):
        sphere_tangent_lift(linear, plane["X"], [0.0, 0.0], 0)
    with pytest.raises(MilnorPointError):
        sphere_tangent_lift(linear, plane["X"], [5.0, 0.0], 0)


def test_plain_lift_examples(linear, plane):
    assert np.allclose(plain_lift(linear, plane["X"], [2.0, -7.0], 0), [1.0, 0.0])
    square = PolyMap([Polynomial(1, [(1, [2])])])
    with pytest.raises(SingularPointError):
        plain_lift(square, Stratification.trivial(1)["X"], [0.0], 0)
    with pytest.raises(InputError):
        plain_lift(linear, plane["X"], [1.0, 1.0], 1)


def test_lift_on_a_stratum_with_equations(cross):
    f = PolyMap([var(2, 0) + var(2, 1)])
    assert np.allclose(plain_lift(f, cross["py"], [0.0, 2.0], 0), [0.0, 1.0])


@settings(max_examples=60)
@given(coord, coord)
def test_lift_properties_broughton(broughton, plane, a, b):
    x = np.array([a, b])
    assume(np.linalg.norm(x) > 1e-3)
    try:
        V = sphere_tangent_lift(broughton, plane["X"], x, 0)
    except MilnorPointError:
        return
    J = broughton.jacobian(x)
    assert J @ V == pytest.approx([1.0], rel=1e-8, abs=1e-8)
    assert abs(V @ x) <= 1e-8 * np.linalg.norm(x) * (1 + np.linalg.norm(V))
    T = sphere_tangent_intersection(plane["X"].tangent(x), x).basis
    assert np.allclose(V, min_norm_kkt(J, T, np.array([1.0])), rtol=1e-6, atol=1e-9)


@settings(max_examples=40)
@given(coord, coord, st.floats(0, 2 * np.pi))
def test_lift_is_independent_of_the_tangent_basis(broughton, a, b, angle):
    x = np.array([a, b])
    assume(np.linalg.norm(broughton.jacobian(x)) > 1e-3)
    c, s = np.cos(angle), np.sin(angle)
    T1 = Subspace(2, np.eye(2))
    T2 = Subspace(2, np.array([[c, -s], [s, c]]))
    v1 = _lift(broughton, T1, x, 0, SingularPointError, "t")
    v2 = _lift(broughton, T2, x, 0, SingularPointError, "t")
    assert np.allclose(v1, v2, rtol=1e-8, atol=1e-10)


def test_bump_examples():
    assert bump([0.0, 1.0], 2.0, 3.0) == 1.0
    assert bump([0.0, 3.0], 2.0, 3.0) == 0.0
    assert bump([0.0, 10.0], 2.0, 3.0) == 0.0
    mid = bump([0.0, 2.5], 2.0, 3.0)
    assert mid == pytest.approx(0.5)
    with pytest.raises(InputError):
        bump([0.0, 0.0], 3.0, 2.0)


@given(st.floats(0, 5), st.floats(0, 5))
def test_bump_is_monotone_in_radius(r1, r2):
    lo, hi = sorted([r1, r2])
    assert bump([lo], 2.0, 3.0) >= bump([hi], 2.0, 3.0)
    assert 0.0 <= bump([lo], 2.0, 3.0) <= 1.0


@settings(max_examples=60)
@given(coord, coord)
def test_glued_field_lifts_e_i(broughton, plane, a, b):
    x = np.array([a, b]) / 10.0  # concentrate samples around the gluing annulus
    try:
        H = glued_field(broughton, plane, x, 0, 2.0, 4.0)
    except (MilnorPointError, SingularPointError, DomainError):
        return
    assert broughton.jacobian(x) @ H == pytest.approx([1.0], rel=1e-8, abs=1e-8)


def test_glued_field_interpolates(linear, plane):
    assert np.allclose(glued_field(linear, plane, [0.5, 0.5], 0, 2.0, 4.0), [1.0, 0.0])
    assert np.allclose(glued_field(linear, plane, [3.0, 4.0], 0, 2.0, 4.0), sphere_tangent_lift_linear(3.0, 4.0))


def test_field_spec_validation():
    with pytest.raises(InputError):
        FieldSpec("glued", 0, (1.0, 1.0, 2.0))
    with pytest.raises(InputError):
        FieldSpec("glued", 0)
    with pytest.raises(InputError):
        FieldSpec("curl", 0)


# rugosity --------------------------------------------------------------------


def test_rugosity_constant_field_passes(punctured_plane):
    rep = rugosity_check(lambda x, s: np.array([1.0, 0.0]), punctured_plane, ("A", "O"), [0.0, 0.0])
    assert rep.verdict == "PASS" and max(rep.values) == 0.0


def test_rugosity_detects_a_jump(punctured_plane):
    def radial(x, s):
        r = np.linalg.norm(x)
        return x / r if r > 0 else np.zeros(2)

    rep = rugosity_check(radial, punctured_plane, ("A", "O"), [0.0, 0.0])
    assert rep.verdict == "FAIL"


def test_rugosity_linear_field_is_lipschitz(punctured_plane):
    rep = rugosity_check(lambda x, s: 3.0 * x, punctured_plane, ("A", "O"), [0.0, 0.0])
    assert rep.verdict == "PASS" and rep.c_estimate == pytest.approx(3.0)


def test_rugosity_requires_frontier_pair(punctured_plane):
    with pytest.raises(InputError):
        rugosity_check(lambda x, s: x, punctured_plane, ("O", "A"), [0.0, 0.0])


# flows -----------------------------------------------------------------------


def test_sphere_flow_matches_circle_oracle(linear, plane):
    traj = integrate_flow(FieldSpec("sphere_tangent", 0), linear, plane, [0.0, 5.0], 3.0)
    assert np.allclose(traj.endpoint, circle_flow_endpoint(3.0), atol=1e-8)
    assert traj.max_drift < 1e-8 and traj.max_norm_drift < 1e-8


def test_plain_flow_translates(linear, plane):
    traj = integrate_flow(FieldSpec("plain_lift", 0), linear, plane, [0.0, 0.0], -1.25)
    assert np.allclose(traj.endpoint, [-1.25, 0.0], atol=1e-12)


def test_glued_flow_from_origin(linear, plane):
    traj = integrate_flow(FieldSpec("glued", 0, (1.0, 2.0, 3.0)), linear, plane, [0.0, 0.0], 0.5)
    assert np.allclose(traj.endpoint, [0.5, 0.0], atol=1e-10)


def test_flow_stays_on_stratum(cross):
    f = PolyMap([var(2, 0) + var(2, 1)])
    traj = integrate_flow(FieldSpec("plain_lift", 0), f, cross, [1.0, 0.0], 0.5)
    assert np.allclose(traj.endpoint, [1.5, 0.0]) and traj.max_residual < 1e-12
    assert set(traj.stratum_ids) == {"px"}


def test_broughton_flow_keeps_level_drift_small(broughton, plane):
    traj = integrate_flow(FieldSpec("glued", 0, (4.0, 6.0, 8.0)), broughton, plane, [1.0, 0.0], 0.4)
    assert broughton(traj.endpoint)[0] == pytest.approx(1.4, abs=1e-8)
    assert traj.max_drift < 1e-8


# fibers ----------------------------------------------------------------------


@pytest.mark.parametrize("t", [0.0, 1.0])
def test_broughton_fiber_counts(broughton, plane, t):
    assert fiber_components(broughton, plane, t).count == broughton_fiber_component_count(t)


def test_linear_fiber_is_connected(linear, plane):
    assert fiber_components(linear, plane, 0.3).count == 1


def test_fiber_on_equation_strata(cross):
    f = PolyMap([var(2, 0) + var(2, 1)])
    fc = fiber_components(f, cross, 1.0, Box.cube(2, 5.0))
    assert fc.count == 2


def test_fiber_value_dimension_checked(linear, plane):
    with pytest.raises(InputError):
        fiber_components(linear, plane, [0.0, 1.0])


# trivialization ---------------------------------------------------------------


def test_trivialize_linear(linear, plane):
    res = trivialize_box(linear, plane, Box((-1.0,), (1.0,)), radii=(2.0, 3.0, 4.0), n_fiber=4)
    assert res.passed
    assert set(res.component_counts.values()) == {1}
    assert res.max_roundtrip < 1e-6 and res.max_drift < 1e-8


def test_trivialize_rejects_base_outside_box(linear, plane):
    with pytest.raises(InputError):
        trivialize_box(linear, plane, Box((-1.0,), (1.0,)), z=[2.0], radii=(2.0, 3.0, 4.0))
