import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratfib.algebra import Polynomial, PolyMap
from stratfib.errors import ConstantRankError, InputError, StratificationError
from stratfib.strata import (
    Box,
    CoverageWarning,
    DomainWarning,
    Shell,
    Stratification,
    Stratum,
    check_frontier,
    check_verdier_w,
    check_wf,
    check_whitney_b,
    locate_stratum,
    point_at_distance,
    sample_stratum,
)

from conftest import var


def circle_strata():
    x, y = var(2, 0), var(2, 1)
    circle = x * x + y * y - 1
    off_p = (x - 1) * (x - 1) + y * y
    return Stratification(2, (Stratum("p", 2, (x - 1, y)), Stratum("C", 2, (circle,), (off_p,))), (("p", "C"),))


def saddle_strata():
    x, y, z = var(3, 0), var(3, 1), var(3, 2)
    S = Stratum("S", 3, (z - x * y,), (y * y,))
    L = Stratum("L", 3, (y, z))
    return Stratification(3, (L, S), (("L", "S"),))


def parabola_control(c=0.05):
    x, y = var(2, 0), var(2, 1)
    A = Stratum("A", 2, (y * y - c * x,), (y,))
    B = Stratum("B", 2, (y,))
    return Stratification(2, (B, A), (("B", "A"),))


def test_declared_dimension_defaults_to_codimension():
    x = var(3, 0)
    assert Stratum("s", 3, (x,)).dim == 2
    assert Stratum("s", 3, (x,), dim=1).dim == 1


@pytest.mark.parametrize(
    "frontier",
    [(("O", "missing"),), (("O", "O"),), (("a", "b"), ("b", "c"))],
)
def test_invalid_frontier_relations(frontier):
    strata = tuple(Stratum(i, 2) for i in ("O", "a", "b", "c"))
    with pytest.raises(InputError):
        Stratification(2, strata, frontier)


def test_duplicate_ids_rejected():
    with pytest.raises(InputError):
        Stratification(2, (Stratum("a", 2), Stratum("a", 2)))


def test_locate_stratum_on_the_cross(cross):
    assert locate_stratum(cross, [0, 0]) == "O"
    assert locate_stratum(cross, [0.5, 0]) == "px"
    assert locate_stratum(cross, [0, -2]) == "ny"
    assert locate_stratum(cross, [1, 1]) is None


def test_overlapping_strata_detected():
    W = Stratification(2, (Stratum("a", 2), Stratum("b", 2, (var(2, 0),))))
    with pytest.raises(StratificationError):
        locate_stratum(W, [0.0, 1.0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_samples_lie_on_their_stratum(seed):
    W = circle_strata()
    pts = sample_stratum(W["C"], Box.cube(2, 2.0), 10, seed=seed)
    assert len(pts) == 10
    for p in pts:
        assert W["C"].contains(p)


def test_shell_sampling_respects_radii(plane):
    pts = sample_stratum(plane["X"], Shell(2, 3.0, 4.0), 20, seed=1)
    r = np.linalg.norm(pts, axis=1)
    assert np.all((r >= 3.0 - 1e-9) & (r <= 4.0 + 1e-9))


def test_sparse_stratum_warns():
    x, y = var(2, 0), var(2, 1)
    far = Stratum("far", 2, (x - 100, y))
    with pytest.warns(CoverageWarning):
        pts = sample_stratum(far, Box.cube(2, 1.0), 3, seed=0, max_attempts=20)
    assert len(pts) == 0


def test_point_at_distance():
    W = circle_strata()
    x = point_at_distance(W["C"], [1.0, 0.0], 0.1, [0.0, 1.0])
    assert abs(np.linalg.norm(x - [1.0, 0.0]) - 0.1) < 1e-9 and W["C"].contains(x)


def test_frontier_check_on_cross(cross):
    rep = check_frontier(cross)
    assert rep.passed
    assert all(ok for _, _, ok, _ in rep.pairs)


def test_frontier_check_detects_undeclared_adjacency():
    x, y = var(2, 0), var(2, 1)
    W = Stratification(2, (Stratum("O", 2, (x, y)), Stratum("px", 2, (y,), (x,))))
    rep = check_frontier(W)
    assert not rep.passed and rep.undeclared[0][:2] == ("O", "px")


def test_frontier_check_detects_false_declaration():
    rep = check_frontier(parabola_control())
    assert not rep.passed


def test_whitney_b_passes_on_regular_pairs(cross):
    assert check_whitney_b(cross, ("px", "O"), (0, 0)).passed
    assert check_whitney_b(circle_strata(), ("C", "p"), (1, 0)).passed
    assert check_whitney_b(saddle_strata(), ("S", "L"), (1, 0, 0)).passed


def test_verdier_on_saddle_and_vacuous_point_stratum(cross):
    rep = check_verdier_w(saddle_strata(), ("S", "L"), (1, 0, 0))
    assert rep.passed and 0.3 < rep.c_estimate < 1.0
    vac = check_verdier_w(cross, ("py", "O"), (0, 0))
    assert vac.passed and vac.vacuous


def test_verdier_negative_control_fails():
    rep = check_verdier_w(parabola_control(), ("A", "B"), (0, 0))
    assert rep.verdict == "FAIL"
    growth = (rep.values[-1] / rep.values[0]) ** (1 / (len(rep.values) - 1))
    assert growth > 2.0


def test_wf_on_saddle():
    W = saddle_strata()
    z = PolyMap([var(3, 2)])
    rep = check_wf(W, ("S", "L"), z, (1, 0, 0))
    assert rep.passed and rep.c_estimate < 1.0
    assert check_wf(W, ("S", "L"), PolyMap([var(3, 0)]), (1, 0, 0)).c_estimate == 0.0


def test_wf_warns_on_point_stratum(cross):
    with pytest.warns(DomainWarning):
        check_wf(cross, ("px", "O"), PolyMap([var(2, 0) + var(2, 1)]), (0, 0))


def test_wf_rejects_nonconstant_rank():
    # both axes minus the origin as one stratum: x has rank 1 on one axis, 0 on the other
    x, y = var(2, 0), var(2, 1)
    axes = Stratum("A", 2, (x * y,), (Polynomial.norm_squared(2),))
    W = Stratification(2, (Stratum("O", 2, (x, y)), axes), (("O", "A"),))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DomainWarning)
        with pytest.raises(ConstantRankError):
            check_wf(W, ("A", "O"), PolyMap([x]), (0, 0))


def test_audit_pair_must_be_declared(cross):
    with pytest.raises(InputError):
        check_whitney_b(cross, ("O", "px"), (0, 0))


def test_audit_reports_are_deterministic():
    W = saddle_strata()
    a = check_verdier_w(W, ("S", "L"), (1, 0, 0), seed=3)
    b = check_verdier_w(W, ("S", "L"), (1, 0, 0), seed=3)
    assert a.values == b.values and a.summary() == b.summary()
