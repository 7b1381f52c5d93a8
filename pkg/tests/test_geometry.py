import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stratfib.algebra import Polynomial
from stratfib.errors import DomainError, InputError
from stratfib.geometry import (
    Subspace,
    nu_min_singular,
    sphere_tangent_intersection,
    subspace_delta,
    tangent_space,
)

from oracles import delta_by_angles, nu_by_eigenvalues

finite = st.floats(-3, 3, allow_nan=False)


@st.composite
def subspaces(draw, n=4):
    k = draw(st.integers(0, n))
    M = draw(arrays(float, (n, max(k, 1)), elements=finite))
    if k == 0:
        return Subspace.trivial(n)
    return Subspace.span(M[:, :k].T, n)


def test_span_and_dimension():
    S = Subspace.span([[1, 0, 0], [2, 0, 0], [0, 1, 0]])
    assert S.dim == 2
    assert S.contains([3, -1, 0]) and not S.contains([0, 0, 1])


def test_non_orthonormal_basis_rejected():
    with pytest.raises(InputError):
        Subspace(2, np.array([[1.0], [1.0]]))


def test_delta_examples():
    line = Subspace.span([[1, 0]])
    plane = Subspace.full(2)
    assert subspace_delta(line, plane) == 0.0
    assert subspace_delta(plane, line) == pytest.approx(1.0)
    diag = Subspace.span([[1, 1]])
    assert subspace_delta(diag, line) == pytest.approx(np.sqrt(0.5))
    assert subspace_delta(Subspace.trivial(2), line) == 0.0


@given(subspaces(), subspaces())
def test_delta_bounds_and_oracle(V1, V2):
    d = subspace_delta(V1, V2)
    assert 0.0 <= d <= 1.0
    if V1.dim <= V2.dim:
        assert d == pytest.approx(delta_by_angles(V1.basis, V2.basis), abs=1e-7)


@given(subspaces())
def test_delta_of_contained_subspace_is_zero(V):
    assert subspace_delta(V, V) < 1e-12
    assert subspace_delta(V, Subspace.full(V.ambient_dim)) < 1e-12


@given(subspaces(), subspaces())
def test_asymmetry_witness(V1, V2):
    # if V1 is strictly inside V2 the reversed distance is 1
    if V1.dim < V2.dim and subspace_delta(V1, V2) < 1e-12:
        assert subspace_delta(V2, V1) == pytest.approx(1.0)


def test_tangent_of_circle():
    circle = Polynomial(2, [(1, [2, 0]), (1, [0, 2]), (-1, [0, 0])])
    T = tangent_space([circle], [0.6, 0.8])
    assert T.dim == 1
    assert abs(T.basis[:, 0] @ np.array([0.6, 0.8])) < 1e-12


def test_tangent_rejects_points_off_the_zero_set():
    circle = Polynomial(2, [(1, [2, 0]), (1, [0, 2]), (-1, [0, 0])])
    with pytest.raises(InputError):
        tangent_space([circle], [2.0, 0.0])


def test_sphere_tangent_intersection():
    T = sphere_tangent_intersection(Subspace.full(3), [0.0, 0.0, 2.0])
    assert T.dim == 2
    np.testing.assert_allclose(T.basis[2], 0.0, atol=1e-15)
    with pytest.raises(DomainError):
        sphere_tangent_intersection(Subspace.full(3), [0.0, 0.0, 0.0])
    # a line through the origin is normal to the sphere: nothing is left
    assert sphere_tangent_intersection(Subspace.span([[1, 0]]), [2.0, 0.0]).dim == 0


@settings(max_examples=60)
@given(arrays(float, (2, 3), elements=finite))
def test_nu_matches_eigenvalue_oracle(J):
    assert nu_min_singular(J) == pytest.approx(nu_by_eigenvalues(J), abs=1e-6)


def test_nu_brute_force_over_unit_covectors():
    J = np.array([[1.0, 2.0, 0.0], [0.5, 1.0, 0.1]])
    th = np.linspace(0, 2 * np.pi, 200_001)
    phis = np.stack([np.cos(th), np.sin(th)], axis=1)
    brute = np.min(np.linalg.norm(phis @ J, axis=1))
    assert nu_min_singular(J) == pytest.approx(brute, abs=1e-8)


def test_nu_rejects_wide_target():
    with pytest.raises(InputError):
        nu_min_singular(np.ones((3, 2)))
