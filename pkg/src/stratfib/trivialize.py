"""Lifted vector fields, stratified flows and triviality checks over boxes.

Three fields lift the coordinate direction e_i of the target:

* the sphere-tangent lift V_i, tangent to both the stratum and the sphere
  through x, so its flow preserves the norm;
* the plain lift W_i, tangent to the stratum only;
* the glued field H_i = phi W_i + (1 - phi) V_i with a smooth bump phi that
  is 1 on the ball of radius R1 and 0 outside the ball of radius R2.

Each lift is the minimal-norm solution of df(v) = e_i inside the relevant
tangent space. Flows are integrated with an adaptive Dormand-Prince pair,
projecting back onto the stratum after every accepted step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .algebra import PolyMap, as_point, newton_project
from .critical import Schedule, box_distance, find_safe_radius, sigma_set
from .errors import (
    DomainError,
    InputError,
    IntegrationError,
    MilnorPointError,
    PreconditionError,
    ProjectionError,
    SingularPointError,
    StratfibError,
)
from .geometry import Subspace, sphere_tangent_intersection
from .strata import (
    AuditReport,
    Box,
    Stratification,
    Stratum,
    _fmt_point,
    _ladder,
    _trend_growth,
    locate_stratum,
    point_at_distance,
)

LIFT_THRESHOLD = 1e-7
FIELD_KINDS = ("sphere_tangent", "plain_lift", "glued")


# ---------------------------------------------------------------------------
# lifts


def _lift(f: PolyMap, T: Subspace, x: np.ndarray, i: int, error: type, what: str) -> np.ndarray:
    if not 0 <= i < f.m:
        raise InputError(f"direction index {i} out of range for m = {f.m}")
    J = f.jacobian(x)
    A = J @ T.basis
    sv = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    smin = sv[f.m - 1] if sv.size >= f.m else 0.0
    if smin < LIFT_THRESHOLD * (1.0 + np.linalg.norm(J, 2)):
        raise error(f"df restricted to the {what} is not surjective at {_fmt_point(x)} (sigma_min={smin:.3e})")
    e = np.zeros(f.m)
    e[i] = 1.0
    return T.basis @ np.linalg.lstsq(A, e, rcond=None)[0]


def sphere_tangent_lift(f: PolyMap, s: Stratum, x, i: int) -> np.ndarray:
    """Minimal-norm V in T_x s, orthogonal to x, with df(V) = e_i.

    ``i`` is 0-based. Raises MilnorPointError where (f, rho) restricted to the
    stratum is not submersive.
    """
    x = as_point(x, s.nvars)
    if not np.any(x):
        raise DomainError("the sphere-tangent lift is undefined at the origin")
    T = sphere_tangent_intersection(s.tangent(x), x)
    return _lift(f, T, x, i, MilnorPointError, "stratum-sphere tangent")


def plain_lift(f: PolyMap, s: Stratum, x, i: int) -> np.ndarray:
    """Minimal-norm W in T_x s with df(W) = e_i; SingularPointError at critical points."""
    x = as_point(x, s.nvars)
    return _lift(f, s.tangent(x), x, i, SingularPointError, "stratum tangent")


def _psi(t: float) -> float:
    return math.exp(-1.0 / t) if t > 0 else 0.0


def bump(x, R1: float, R2: float) -> float:
    """Smooth cut-off: 1 on the closed R1-ball, 0 outside the open R2-ball."""
    if not 0 < R1 < R2:
        raise InputError(f"bump needs 0 < R1 < R2, got {R1}, {R2}")
    r = float(np.linalg.norm(x))
    inner, outer = _psi(R2 - r), _psi(r - R1)
    return inner / (inner + outer)


def glued_field(f: PolyMap, W: Stratification, x, i: int, R1: float, R2: float,
                stratum: Stratum | None = None) -> np.ndarray:
    """phi W_i + (1 - phi) V_i on the stratum of x; a lift with zero weight is not evaluated."""
    x = as_point(x, W.nvars)
    if stratum is None:
        sid = locate_stratum(W, x)
        if sid is None:
            raise InputError(f"{_fmt_point(x)} lies on no stratum")
        stratum = W[sid]
    phi = bump(x, R1, R2)
    if phi == 1.0:
        return plain_lift(f, stratum, x, i)
    if phi == 0.0:
        return sphere_tangent_lift(f, stratum, x, i)
    return phi * plain_lift(f, stratum, x, i) + (1.0 - phi) * sphere_tangent_lift(f, stratum, x, i)


@dataclass(frozen=True)
class FieldSpec:
    """Which lift to integrate; ``index`` is 0-based, ``radii`` is (R, R1, R2)."""

    kind: str
    index: int
    radii: tuple | None = None
    box: Box | None = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InputError(f"unknown field kind {self.kind!r}; expected one of {FIELD_KINDS}")
        if self.index < 0:
            raise InputError("direction index must be nonnegative")
        if self.kind == "glued":
            if self.radii is None or len(self.radii) != 3:
                raise InputError("glued fields need radii (R, R1, R2)")
            R, R1, R2 = self.radii
            if not 0 <= R < R1 < R2:
                raise InputError(f"glued fields need R < R1 < R2, got {self.radii}")

    def evaluator(self, f: PolyMap, W: Stratification) -> Callable:
        """Callable (x, stratum) -> field vector."""
        if self.kind == "sphere_tangent":
            return lambda x, s: sphere_tangent_lift(f, s, x, self.index)
        if self.kind == "plain_lift":
            return lambda x, s: plain_lift(f, s, x, self.index)
        _, R1, R2 = self.radii
        return lambda x, s: glued_field(f, W, x, self.index, R1, R2, stratum=s)


# ---------------------------------------------------------------------------
# rugosity


def rugosity_check(
    field_eval: Callable,
    W: Stratification,
    pair,
    y,
    scales: Sequence[float] | None = None,
    seed: int = 0,
    n_samples: int = 8,
    growth_limit: float = 1.5,
) -> AuditReport:
    """Empirical Lipschitz bound of a field across the pair (alpha, beta) near y.

    ``field_eval(x, stratum)`` returns the field vector. At each scale r
    points x' of X_beta within r of y are paired with points y'' of X_alpha
    at distance r from x', and the largest |v(y'') - v(x')| / |y'' - x'| is
    recorded. Samples where the field is undefined are skipped and counted.
    A bounded field keeps the ratio roughly flat; a jump makes it grow like
    1/r, i.e. by a factor 2 per halving.
    """
    alpha, beta = (str(p) for p in pair)
    if alpha != beta and (beta, alpha) not in W.frontier:
        raise InputError(f"({beta!r}, {alpha!r}) is not a declared frontier pair")
    A, B = W[alpha], W[beta]
    y = as_point(y, W.nvars)
    if not B.contains(y):
        raise InputError(f"base point {y} is not on stratum {beta!r}")
    scales = list(scales) if scales is not None else _ladder(0.1, 4)
    rng = np.random.default_rng(seed)
    values, skipped, attempted = [], 0, 0
    for rk in scales:
        ratios = []
        for _ in range(n_samples):
            attempted += 1
            if B.dim == 0:
                xp = y
            else:
                xp = point_at_distance(B, y, rk * rng.uniform(0.0, 1.0) + 1e-300,
                                       rng.standard_normal(W.nvars), rng=rng)
            yp = None if xp is None else point_at_distance(A, xp, rk, rng.standard_normal(W.nvars), rng=rng)
            if yp is None:
                skipped += 1
                continue
            try:
                d = float(np.linalg.norm(field_eval(yp, A) - field_eval(xp, B)))
            except StratfibError:
                skipped += 1
                continue
            ratios.append(d / float(np.linalg.norm(yp - xp)))
        values.append(max(ratios) if ratios else math.nan)
    settings = {"scales": scales, "n_samples": n_samples, "growth_limit": growth_limit}
    notes = []
    if all(math.isnan(v) for v in values):
        notes.append(f"field undefined at all {attempted} samples")
        return AuditReport("rugosity", A.id, B.id, tuple(y), scales, values, "PASS", vacuous=True,
                           skipped=skipped, settings=settings, notes=notes)
    if any(math.isnan(v) for v in values):
        verdict = "INCONCLUSIVE"
    else:
        verdict = "FAIL" if _trend_growth(values) > growth_limit else "PASS"
    cmax = max(v for v in values if not math.isnan(v))
    return AuditReport("rugosity", A.id, B.id, tuple(y), scales, values, verdict, c_estimate=cmax,
                       skipped=skipped, settings=settings, notes=notes)


# ---------------------------------------------------------------------------
# flows

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    stratum_ids: list
    diagnostics: list  # (f-drift vector, norm, stratum residual) per accepted point

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def max_drift(self) -> float:
        return max(float(np.max(np.abs(d))) for d, _, _ in self.diagnostics)

    @property
    def max_norm_drift(self) -> float:
        n0 = self.diagnostics[0][1]
        return max(abs(n - n0) for _, n, _ in self.diagnostics)

    @property
    def max_residual(self) -> float:
        return max(r for _, _, r in self.diagnostics)

    def csv_rows(self) -> list[tuple]:
        return [(float(t),) + tuple(map(float, x)) + (float(np.max(np.abs(d))), n, r)
                for t, x, (d, n, r) in zip(self.times, self.points, self.diagnostics)]


def integrate_flow(
    spec: FieldSpec,
    f: PolyMap,
    W: Stratification,
    x0,
    t_target: float,
    tol: float = 1e-9,
    stratum: Stratum | None = None,
    max_steps: int = 20000,
) -> Trajectory:
    """Flow of the lifted field from x0 for time ``t_target``.

    Since df(field) = e_i, f_i increases by exactly t along the flow; the
    recorded f-drift measures the deviation from f(x0) + t e_i.
    """
    x0 = as_point(x0, W.nvars)
    if stratum is None:
        sid = locate_stratum(W, x0)
        if sid is None:
            raise InputError(f"start point {_fmt_point(x0)} lies on no stratum")
        stratum = W[sid]
    if spec.index >= f.m:
        raise InputError(f"direction index {spec.index} out of range for m = {f.m}")
    evaluate = spec.evaluator(f, W)
    eqs = stratum.equations
    e = np.zeros(f.m)
    e[spec.index] = 1.0
    f0 = np.atleast_1d(f(x0))

    def rhs(x):
        if eqs:
            x = newton_project(eqs, x, tol=1e-13)
        return evaluate(x, stratum)

    def diag(x, t):
        return (np.atleast_1d(f(x)) - f0 - t * e, float(np.linalg.norm(x)), stratum.residual(x))

    direction = 1.0 if t_target >= 0 else -1.0
    T = abs(float(t_target))
    t, x = 0.0, x0.copy()
    times, pts, diags = [0.0], [x.copy()], [diag(x, 0.0)]
    h = min(T, 0.1 * (1.0 + np.linalg.norm(x))) if T > 0 else 0.0
    try:
        k1 = rhs(x)
    except StratfibError as exc:
        raise IntegrationError(f"field undefined at the start point: {exc}", 0.0, x) from exc
    steps = 0
    while t < T:
        steps += 1
        if steps > max_steps:
            raise IntegrationError("step budget exhausted", direction * t, x)
        h = min(h, T - t)
        if h < 1e-14 * (1.0 + T):
            raise IntegrationError("step size underflow", direction * t, x)
        try:
            k = [k1]
            for s in range(1, 7):
                xs = x + direction * h * sum(a * kk for a, kk in zip(_A[s], k))
                k.append(rhs(xs))
            K = np.array(k)
            y5 = x + direction * h * (_B5 @ K)
            y4 = x + direction * h * (_B4 @ K)
            scale = tol + tol * np.maximum(np.abs(x), np.abs(y5))
            err = float(np.max(np.abs(y5 - y4) / scale))
            if err > 1.0:
                h *= max(0.2, 0.9 * err ** -0.2)
                continue
            x_new = newton_project(eqs, y5, tol=1e-13) if eqs else y5
            if stratum.residual(x_new) >= tol or not stratum.satisfies_inequalities(x_new):
                h *= 0.5
                continue
            k1_new = rhs(x_new)
        except (StratfibError, FloatingPointError):
            h *= 0.25
            continue
        t += h
        x, k1 = x_new, k1_new
        times.append(direction * t)
        pts.append(x.copy())
        diags.append(diag(x, direction * t))
        h *= min(5.0, max(0.2, 0.9 * max(err, 1e-10) ** -0.2))
    return Trajectory(np.array(times), np.array(pts), [stratum.id] * len(times), diags)


# ---------------------------------------------------------------------------
# fibers


@dataclass
class FiberComponents:
    value: tuple
    count: int
    points: np.ndarray
    labels: np.ndarray
    spacing: float


class LevelGrid:
    """Values of a scalar f on a planar grid, reusable across level values."""

    def __init__(self, f: PolyMap, window: Box, spacing: float, chunk: int = 200):
        if f.m != 1 or f.nvars != 2:
            raise InputError("grid resolution needs a scalar map on the plane")
        lo, hi = np.asarray(window.lo), np.asarray(window.hi)
        self.spacing = spacing
        self.xs = np.arange(lo[0], hi[0] + spacing / 2, spacing)
        self.ys = np.arange(lo[1], hi[1] + spacing / 2, spacing)
        self.values = np.empty((len(self.xs), len(self.ys)))
        for start in range(0, len(self.xs), chunk):
            X, Y = np.meshgrid(self.xs[start: start + chunk], self.ys, indexing="ij")
            self.values[start: start + chunk] = f(np.stack([X, Y], axis=-1))[..., 0]

    def cells(self, t: float, s: Stratum) -> np.ndarray:
        """Centres of the cells crossed by {f = t} that lie on s."""
        neg = self.values <= t
        some_neg = neg[:-1, :-1] | neg[1:, :-1] | neg[:-1, 1:] | neg[1:, 1:]
        all_neg = neg[:-1, :-1] & neg[1:, :-1] & neg[:-1, 1:] & neg[1:, 1:]
        ii, jj = np.nonzero(some_neg & ~all_neg)
        h = self.spacing / 2
        pts = np.column_stack([self.xs[ii] + h, self.ys[jj] + h])
        if s.inequalities and len(pts):
            pts = pts[[s.satisfies_inequalities(p) for p in pts]]
        return pts


def _sampled_fiber(f: PolyMap, s: Stratum, t, window: Box, count: int, rng) -> list:
    cons = tuple(s.equations) + tuple(p - float(v) for p, v in zip(f.components, np.atleast_1d(t)))
    out = []
    for _ in range(count):
        try:
            x = newton_project(cons, window.sample(rng), tol=1e-12)
        except ProjectionError:
            continue
        if window.contains(x) and s.contains(x):
            out.append(x)
    return out


def fiber_components(
    f: PolyMap,
    W: Stratification,
    t,
    window: Box | None = None,
    spacing: float = 0.01,
    extra_points: Sequence = (),
    samples: int = 200,
    seed: int = 0,
    level_grid: LevelGrid | None = None,
) -> FiberComponents:
    """Connected components of f^{-1}(t) inside the window.

    Strata without equations in the plane with m = 1 are resolved on a grid
    of the given spacing (centres of cells crossed by the level set);
    other strata contribute Newton-projected random samples. All points,
    together with ``extra_points``, are linked when closer than twice the
    spacing and the links' connected components are counted. A precomputed
    ``level_grid`` avoids re-evaluating f when several levels are counted.
    """
    t_vec = np.atleast_1d(np.asarray(t, float))
    if t_vec.shape != (f.m,):
        raise InputError("fiber value has the wrong dimension")
    window = window or Box.cube(W.nvars, 20.0)
    rng = np.random.default_rng(seed)
    chunks = []
    for s in W.strata:
        if s.dim < f.m:
            pts = [x for x in _sampled_fiber(f, s, t_vec, window, 4, rng)]
        elif not s.equations and f.m == 1 and W.nvars == 2:
            if level_grid is None:
                level_grid = LevelGrid(f, window, spacing)
            chunks.append(level_grid.cells(float(t_vec[0]), s))
            continue
        else:
            pts = _sampled_fiber(f, s, t_vec, window, samples, rng)
        if pts:
            chunks.append(np.array(pts))
    extra = [np.asarray(p, float) for p in extra_points if window.contains(p)]
    if extra:
        chunks.append(np.array(extra))
    pts = np.vstack(chunks) if chunks else np.zeros((0, W.nvars))
    if len(pts) == 0:
        return FiberComponents(tuple(t_vec), 0, pts, np.zeros(0, int), spacing)
    pairs = cKDTree(pts).query_pairs(2 * spacing, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts)))
    count, labels = connected_components(graph, directed=False)
    return FiberComponents(tuple(t_vec), int(count), pts, labels, spacing)


# ---------------------------------------------------------------------------
# trivialisation over a box


@dataclass
class TrivializationResult:
    box: Box
    base: tuple
    radii: tuple
    targets: list
    transported: dict
    max_drift: float
    max_norm_drift: float
    max_roundtrip: float
    max_residual: float
    component_counts: dict
    failures: list
    verdict: str
    tolerances: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _grid_targets(B: Box, grid: Sequence[int]) -> list[tuple]:
    lo, hi = np.asarray(B.lo), np.asarray(B.hi)
    axes = []
    for a, b, k in zip(lo, hi, grid):
        # interior points of the open interval, endpoints excluded
        axes.append([a + (b - a) * (j + 1) / (k + 1) for j in range(k)])
    mesh = np.meshgrid(*axes, indexing="ij")
    return [tuple(float(c) for c in p) for p in np.stack([m.ravel() for m in mesh], axis=-1)]


def default_grid(m: int) -> tuple:
    return {1: (9,), 2: (3, 3)}.get(m, (2,) * m)


def _fiber_samples(f, W, z, window, count, rng) -> list[tuple]:
    out = []
    for s in W.strata:
        if s.dim < f.m:
            continue
        for x in _sampled_fiber(f, s, z, window, 6 * count, rng):
            if all(np.linalg.norm(x - p) > 1e-3 for p, _ in out):
                out.append((x, s))
    order = rng.permutation(len(out))
    return [out[k] for k in order[:count]]


def trivialize_box(
    f: PolyMap,
    W: Stratification,
    B: Box,
    z=None,
    grid: Sequence[int] | None = None,
    n_fiber: int = 8,
    tol: float = 1e-9,
    radii: tuple | None = None,
    schedule: Schedule = Schedule(),
    seed: int = 0,
    sigma=None,
    window: Box | None = None,
    spacing: float = 0.01,
    drift_tol: float = 1e-6,
    roundtrip_tol: float = 1e-5,
    residual_tol: float = 1e-8,
    keep_trajectories: int = 4,
) -> TrivializationResult:
    """Transport fiber samples over a grid of targets in B with the glued fields.

    Each sample of f^{-1}(z) is moved to every target t by flowing H_1, then
    H_2, ..., then H_m, checked for f(endpoint) = t, and flowed back in
    reverse order to measure the round-trip error. Fiber components are
    counted at every target. PASS needs all metrics below their tolerances,
    no failed trajectory and a constant component count.
    """
    m = f.m
    if len(B.lo) != m:
        raise InputError("box dimension differs from m")
    z = np.array([(a + b) / 2 for a, b in zip(B.lo, B.hi)]) if z is None else np.atleast_1d(np.asarray(z, float))
    if box_distance(B, z) > 0 or np.any(z <= np.asarray(B.lo)) or np.any(z >= np.asarray(B.hi)):
        raise InputError(f"base value {z} is not inside the box")
    grid = tuple(grid) if grid is not None else default_grid(m)
    if len(grid) != m:
        raise InputError("grid needs one count per target coordinate")
    window = window or Box.cube(W.nvars, 20.0)
    if radii is None:
        if sigma is None:
            sigma = sigma_set(f, W, schedule, seed)
        R = float(find_safe_radius(f, W, B, schedule, seed, sigma=sigma))
        radii = (R, 1.5 * R, 2.0 * R)
    else:
        if sigma is not None:
            for a in sigma:
                if box_distance(B, a.center) <= a.radius + 1e-3:
                    raise PreconditionError(f"closure of the box meets the atom at {a.center}")
    R, R1, R2 = radii
    specs = [FieldSpec("glued", i, (R, R1, R2), B) for i in range(m)]
    rng = np.random.default_rng(seed)
    samples = _fiber_samples(f, W, z, window, n_fiber, rng)
    if not samples:
        raise PreconditionError(f"no fiber samples of f^-1({z}) found in the window")
    targets = _grid_targets(B, grid)
    transported, failures, kept = {}, [], []
    max_drift = max_norm = max_rt = max_res = 0.0

    def flow_chain(x, s, deltas, order):
        nonlocal max_drift, max_norm, max_res
        for i in order:
            if deltas[i] == 0:
                continue
            traj = integrate_flow(specs[i], f, W, x, deltas[i], tol=tol, stratum=s)
            max_drift = max(max_drift, traj.max_drift)
            max_res = max(max_res, traj.max_residual)
            if traj.diagnostics[0][1] >= R2 and np.all(np.linalg.norm(traj.points, axis=1) >= R2):
                max_norm = max(max_norm, traj.max_norm_drift)
            if len(kept) < keep_trajectories:
                kept.append(traj)
            x = traj.endpoint
        return x

    for t in targets:
        deltas = np.asarray(t) - z
        moved = []
        for x0, s in samples:
            try:
                x1 = flow_chain(x0, s, deltas, range(m))
                end_err = float(np.max(np.abs(np.atleast_1d(f(x1)) - np.asarray(t))))
                max_drift_local = end_err
                back = flow_chain(x1, s, -deltas, reversed(range(m)))
                rt = float(np.linalg.norm(back - x0))
            except StratfibError as exc:
                failures.append((t, tuple(map(float, x0)), str(exc)))
                continue
            max_rt = max(max_rt, rt)
            max_drift = max(max_drift, max_drift_local)
            moved.append(x1)
        transported[t] = np.array(moved).reshape(len(moved), W.nvars)
    level_grid = LevelGrid(f, window, spacing) if m == 1 and W.nvars == 2 else None
    counts = {}
    for t in [tuple(map(float, z))] + targets:
        extra = transported.get(t, np.zeros((0, W.nvars)))
        counts[t] = fiber_components(f, W, t, window, spacing, extra_points=extra, seed=seed,
                                     level_grid=level_grid).count
    ok = (
        not failures
        and max_drift < drift_tol
        and max_rt < roundtrip_tol
        and max_res < residual_tol
        and len(set(counts.values())) == 1
    )
    return TrivializationResult(
        box=B,
        base=tuple(map(float, z)),
        radii=(float(R), float(R1), float(R2)),
        targets=targets,
        transported=transported,
        max_drift=max_drift,
        max_norm_drift=max_norm,
        max_roundtrip=max_rt,
        max_residual=max_res,
        component_counts=counts,
        failures=failures,
        verdict="PASS" if ok else "FAIL",
        tolerances={"drift": drift_tol, "roundtrip": roundtrip_tol, "residual": residual_tol, "tol": tol},
        trajectories=kept,
    )
