"""Stratified Milnor sets and the limit-value sets built from them.

The Milnor set of f on a stratum is where (f, rho) restricted to the stratum
drops rank, rho being the squared norm. Values of f along Milnor points that
escape (to infinity, or to the frontier of the stratum) form S_inf; together
with the critical values of f on each stratum they form the set that must be
avoided for the trivialisation to exist.

Limits are detected numerically: Milnor points are tracked across a ladder of
sphere shells (norm escape) or of shrinking tubes around frontier strata
(frontier escape), and a branch is declared convergent when its successive
f-value differences contract by a fixed factor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .algebra import PolyMap, as_point, newton_project
from .errors import InputError, PreconditionError, ProjectionError, SafeRadiusNotFound
from .geometry import nu_min_singular
from .strata import (
    Box,
    CoverageWarning,
    Stratification,
    Stratum,
    sample_stratum,
    sphere_equation,
)

CRIT_THRESHOLD = 1e-7
CONTRACTION = 1.5


@dataclass(frozen=True)
class Schedule:
    """Radius ladder r0 * factor**k, k = 0 .. count-1."""

    r0: float = 4.0
    factor: float = 2.0
    count: int = 11

    def __post_init__(self):
        if self.r0 <= 0 or self.factor <= 1 or self.count < 1:
            raise InputError(f"invalid schedule {self}")

    @property
    def radii(self) -> list[float]:
        return [self.r0 * self.factor**k for k in range(self.count)]


# ---------------------------------------------------------------------------
# value sets


@dataclass(frozen=True)
class Evidence:
    norm: float
    value: tuple
    stratum: str
    source: str


@dataclass
class Atom:
    """Closed ball in R^m together with the samples that produced it."""

    center: np.ndarray
    radius: float
    evidence: list
    low_confidence: bool = False

    def distance(self, t) -> float:
        return max(0.0, float(np.linalg.norm(np.asarray(t, float) - self.center)) - self.radius)


def _enclosing(a: Atom, b: Atom) -> Atom:
    d = float(np.linalg.norm(b.center - a.center))
    if d + b.radius <= a.radius:
        center, radius = a.center, a.radius
    elif d + a.radius <= b.radius:
        center, radius = b.center, b.radius
    else:
        radius = (d + a.radius + b.radius) / 2
        center = a.center + (radius - a.radius) * (b.center - a.center) / d
    return Atom(np.asarray(center, float), float(radius), a.evidence + b.evidence,
                a.low_confidence or b.low_confidence)


class LimitValueSet:
    """Finite union of closed balls in R^m; closed by construction."""

    def __init__(self, dim: int, atoms: Sequence[Atom] = ()):
        self.dim = int(dim)
        self.atoms: list[Atom] = []
        for a in atoms:
            if np.asarray(a.center).shape != (self.dim,):
                raise InputError("atom center has the wrong dimension")
            if a.radius < 0 or not a.evidence:
                raise InputError("atoms need a nonnegative radius and at least one evidence entry")
            self.atoms.append(Atom(np.asarray(a.center, float), float(a.radius),
                                   list(a.evidence), a.low_confidence))
        self._sort()

    def _sort(self):
        self.atoms.sort(key=lambda a: (tuple(np.round(a.center, 12)), a.radius))

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def is_empty(self) -> bool:
        return not self.atoms

    def distance(self, t) -> float:
        """Distance from t to the set (inf for the empty set)."""
        return min((a.distance(t) for a in self.atoms), default=math.inf)

    def contains(self, t, margin: float = 0.0) -> bool:
        return self.distance(t) <= margin

    def merged(self, tol: float = 0.0) -> "LimitValueSet":
        """Union in which overlapping balls are replaced by enclosing balls."""
        atoms = list(self.atoms)
        changed = True
        while changed:
            changed = False
            for i in range(len(atoms)):
                for j in range(i + 1, len(atoms)):
                    a, b = atoms[i], atoms[j]
                    if np.linalg.norm(a.center - b.center) <= a.radius + b.radius + tol:
                        atoms[i] = _enclosing(a, b)
                        del atoms[j]
                        changed = True
                        break
                if changed:
                    break
        return LimitValueSet(self.dim, atoms)

    def union(self, other: "LimitValueSet", tol: float = 0.0) -> "LimitValueSet":
        if other.dim != self.dim:
            raise InputError("cannot unite value sets of different dimensions")
        return LimitValueSet(self.dim, self.atoms + other.atoms).merged(tol)

    def csv_rows(self) -> list[tuple]:
        return [tuple(float(c) for c in a.center) + (a.radius, len(a.evidence), int(a.low_confidence))
                for a in self.atoms]

    def __repr__(self):
        inner = ", ".join(
            f"{np.array2string(a.center, precision=6)}±{a.radius:.2e}" for a in self.atoms
        )
        return f"LimitValueSet({{{inner}}})"


def cluster_values(values: np.ndarray, evidence: list, tol: float = 1e-6) -> list[Atom]:
    """Group nearby values into atoms whose radius covers every member."""
    values = np.atleast_2d(np.asarray(values, float))
    order = np.lexsort(values.T[::-1]) if len(values) else []
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if np.linalg.norm(values[g[0]] - values[i]) <= tol * (1 + np.linalg.norm(values[g[0]])):
                g.append(i)
                break
        else:
            groups.append([i])
    atoms = []
    for g in groups:
        c = values[g].mean(axis=0)
        r = float(max(np.linalg.norm(values[i] - c) for i in g))
        atoms.append(Atom(c, r, [evidence[i] for i in g]))
    return atoms


# ---------------------------------------------------------------------------
# rank certificates


def _row_normalise(A: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    return np.divide(A, norms, out=np.zeros_like(A), where=norms > 0)


def restricted_rows(f: PolyMap, x: np.ndarray, with_rho: bool) -> np.ndarray:
    rows = f.jacobian(x)
    if with_rho:
        rows = np.vstack([rows, x[None, :]])
    return _row_normalise(rows)


def rank_certificate(f: PolyMap, s: Stratum, x, with_rho: bool = True) -> float:
    """Smallest of the m(+1) singular values of d(f[, rho]) restricted to T_x s.

    Rows are normalised, so the value is the sine-like measure of linear
    dependence and is zero whenever the restricted map cannot have full rank.
    """
    x = as_point(x, s.nvars)
    A = restricted_rows(f, x, with_rho) @ s.tangent(x).basis
    k = A.shape[0]
    sv = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    sv = np.concatenate([sv, np.zeros(max(0, k - sv.size))])
    return float(sv[k - 1])


def is_critical(cert: float, threshold: float = CRIT_THRESHOLD, scale: float = 1.0) -> bool:
    return cert < threshold * (1.0 + scale)


def _stratum_normals(s: Stratum, x: np.ndarray) -> np.ndarray:
    if not s.equations:
        return np.zeros((s.nvars, 0))
    return PolyMap(s.equations).jacobian(x).T


def _refine(
    f: PolyMap,
    s: Stratum,
    x0: np.ndarray,
    with_rho: bool,
    radius: float | None = None,
    threshold: float = CRIT_THRESHOLD,
    max_iter: int = 60,
) -> np.ndarray | None:
    """Gauss-Newton on the augmented rank-deficiency system, None on failure.

    Unknowns (x, lam). Equations: stratum equations, optionally the sphere
    |x| = radius, P(x) A(x)^T lam = 0 with P the projector onto the tangent
    (of the stratum, intersected with the sphere when ``radius`` is given)
    and A the Jacobian of f (with x appended when ``with_rho``), rows scaled
    to unit length at the start point, and |lam|^2 = 1.
    """
    n = s.nvars
    eqs = list(s.equations)
    sphere = sphere_equation(n, radius) if radius is not None else None
    cons = PolyMap(eqs + ([sphere] if sphere is not None else [])) if (eqs or sphere) else None

    def parts(x):
        N = _stratum_normals(s, x)
        if radius is not None:
            N = np.hstack([N, x[:, None]])
        if N.shape[1]:
            Q, _ = np.linalg.qr(N)
            P = np.eye(n) - Q @ Q.T
        else:
            P = np.eye(n)
        rows = f.jacobian(x)
        if with_rho and radius is None:
            rows = np.vstack([rows, x[None, :]])
        return P, rows * scales[:, None]

    # rows are scaled by constants frozen at the start; normalising at every
    # iterate would make the system extremely ill-conditioned near branches
    # along which a gradient degenerates
    rows0 = f.jacobian(x0)
    if with_rho and radius is None:
        rows0 = np.vstack([rows0, x0[None, :]])
    norms0 = np.linalg.norm(rows0, axis=1)
    scales = np.where(norms0 > 0, 1.0 / np.where(norms0 > 0, norms0, 1.0), 1.0)

    def residual(z):
        x, lam = z[:n], z[n:]
        P, A = parts(x)
        out = [P @ (A.T @ lam), [lam @ lam - 1.0]]
        if cons is not None:
            out.insert(0, cons(x))
        return np.concatenate(out)

    P, A = parts(x0)
    lam0 = np.linalg.svd(A @ P)[0][:, -1]
    z = np.concatenate([x0, lam0])
    # a trust region keeps steps local; plain Gauss-Newton overshoots into
    # neighbouring branches where the system is badly conditioned
    try:
        z = least_squares(residual, z, method="trf", jac="3-point", x_scale="jac",
                          xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iter * (z.size + 1)).x
    except ValueError:
        return None
    x = z[:n]
    if not np.all(np.isfinite(x)):
        return None
    if (with_rho or radius is not None) and np.linalg.norm(x) == 0:
        return None
    # settle exactly on the constraint set, then certify
    if cons is not None:
        try:
            x = newton_project(cons.components, x, tol=1e-12)
        except ProjectionError:
            return None
    if not s.contains(x):
        return None
    if radius is not None:
        cert = _sphere_certificate(f, s, x)
    else:
        cert = rank_certificate(f, s, x, with_rho=with_rho)
    return x if cert < threshold * (1.0 + math.sqrt(f.m + 1)) else None


def _sphere_certificate(f: PolyMap, s: Stratum, x: np.ndarray) -> float:
    """Rank certificate of d(f) on T_x s intersected with the sphere tangent."""
    from .geometry import sphere_tangent_intersection

    T = sphere_tangent_intersection(s.tangent(x), x)
    A = restricted_rows(f, x, False) @ T.basis
    m = A.shape[0]
    sv = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    sv = np.concatenate([sv, np.zeros(max(0, m - sv.size))])
    return float(sv[m - 1])


def _dedupe(points: list, tol: float) -> list:
    out = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in out):
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Milnor sets and singular values


@dataclass
class MilnorSample:
    stratum_id: str
    points: np.ndarray
    residuals: np.ndarray


def _quiet_sample(s, region, count, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        return sample_stratum(s, region, count, seed=seed)


def milnor_sample(
    f: PolyMap,
    s: Stratum,
    region,
    count: int = 32,
    seed: int = 0,
    threshold: float = CRIT_THRESHOLD,
) -> MilnorSample:
    """Points of M(f|s) inside ``region``.

    Strata of dimension <= m lie entirely in their Milnor set, so they are
    simply sampled. Otherwise random stratum points are refined towards rank
    deficiency of d(f, rho) restricted to the stratum.
    """
    if f.nvars != s.nvars:
        raise InputError("map and stratum dimensions differ")
    if s.dim <= f.m:
        pts = _quiet_sample(s, region, count, seed)
        return MilnorSample(s.id, pts, np.zeros(len(pts)))
    starts = _quiet_sample(s, region, count, seed)
    found = []
    for x0 in starts:
        if np.linalg.norm(x0) == 0:
            continue
        x = _refine(f, s, x0, with_rho=True, threshold=threshold)
        if x is not None and region.contains(x):
            found.append(x)
    found = _dedupe(found, 1e-9)
    pts = np.array(found).reshape(len(found), s.nvars)
    res = np.array([rank_certificate(f, s, x) for x in pts])
    return MilnorSample(s.id, pts, res)


def sing_values_sample(
    f: PolyMap,
    s: Stratum,
    region,
    count: int = 32,
    seed: int = 0,
    threshold: float = CRIT_THRESHOLD,
    cluster_tol: float = 1e-6,
) -> LimitValueSet:
    """Critical values of f restricted to s found inside ``region``."""
    if s.dim < f.m:
        pts = np.array(_dedupe(list(_quiet_sample(s, region, count, seed)), 1e-9)).reshape(-1, s.nvars)
    else:
        found = []
        for x0 in _quiet_sample(s, region, count, seed):
            x = _refine(f, s, x0, with_rho=False, threshold=threshold)
            if x is not None and region.contains(x):
                found.append(x)
        pts = np.array(_dedupe(found, 1e-9)).reshape(-1, s.nvars)
    if len(pts) == 0:
        return LimitValueSet(f.m)
    vals = f(pts)
    ev = [Evidence(float(np.linalg.norm(x)), tuple(map(float, v)), s.id, "sing") for x, v in zip(pts, vals)]
    return LimitValueSet(f.m, cluster_values(vals, ev, cluster_tol)).merged()


# ---------------------------------------------------------------------------
# branch tracking across shells


@dataclass
class Branch:
    start: int
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    extra: list = field(default_factory=list)
    ambiguous: bool = False

    @property
    def end(self) -> int:
        return self.start + len(self.points) - 1


def track_branches(shells: list[list[np.ndarray]], values: list[list[np.ndarray]],
                   extras: list[list[float]] | None = None, match_angle: float = 0.5) -> list[Branch]:
    """Nearest-neighbour continuation of point sets across consecutive shells.

    Points are compared by direction x/|x|; a point continues the branch
    whose last direction is closest, within ``match_angle`` (radians). A
    branch with two comparably close candidates is flagged ambiguous.
    """
    branches: list[Branch] = []
    for k, (pts, vals) in enumerate(zip(shells, values)):
        ext = extras[k] if extras is not None else [None] * len(pts)
        dirs = [p / np.linalg.norm(p) for p in pts]
        active = [b for b in branches if b.end == k - 1]
        pairs = []
        for bi, b in enumerate(active):
            u = b.points[-1] / np.linalg.norm(b.points[-1])
            for pi, d in enumerate(dirs):
                ang = float(np.arccos(np.clip(u @ d, -1.0, 1.0)))
                if ang <= match_angle:
                    pairs.append((ang, bi, pi))
        pairs.sort()
        used_b, used_p = set(), set()
        for ang, bi, pi in pairs:
            if bi in used_b or pi in used_p:
                continue
            rivals = [a for a, b2, p2 in pairs if b2 == bi and p2 != pi]
            if rivals and min(rivals) < 1.2 * ang + 1e-9:
                active[bi].ambiguous = True
            used_b.add(bi)
            used_p.add(pi)
            active[bi].points.append(pts[pi])
            active[bi].values.append(vals[pi])
            active[bi].extra.append(ext[pi])
        for pi in range(len(pts)):
            if pi not in used_p:
                branches.append(Branch(k, [pts[pi]], [vals[pi]], [ext[pi]]))
    return branches


def contracts(seq: Sequence, factor: float = CONTRACTION, tail: int = 3, abs_tol: float = 1e-12) -> bool:
    """True when the last ``tail`` successive differences shrink by ``factor`` each."""
    seq = [np.atleast_1d(np.asarray(v, float)) for v in seq]
    if len(seq) < tail + 1:
        return False
    d = [float(np.linalg.norm(seq[i + 1] - seq[i])) for i in range(len(seq) - tail - 1, len(seq) - 1)]
    scale = 1.0 + float(np.linalg.norm(seq[-1]))
    if d[-1] <= abs_tol * scale and d[-2] <= abs_tol * scale:
        return True
    return all(d[i] >= factor * d[i + 1] for i in range(len(d) - 1))


def _branch_atom(b: Branch, sid: str, source: str) -> Atom:
    v = [np.atleast_1d(np.asarray(x, float)) for x in b.values]
    center = v[-1]
    radius = float(np.linalg.norm(v[-1] - v[-2]))
    ev = [Evidence(float(np.linalg.norm(p)), tuple(map(float, val)), sid, source)
          for p, val in zip(b.points[-2:], v[-2:])]
    return Atom(center, radius, ev, b.ambiguous)


# ---------------------------------------------------------------------------
# S_inf: norm escape and frontier escape


def _extremise(f: PolyMap, s: Stratum, sphere, x0: np.ndarray, c: np.ndarray, iters: int = 60):
    """Projected steepest descent of c.f on s intersected with a sphere.

    Local extrema of a linear combination of the components are Milnor
    points, and their basins are wide, unlike those of the rank system.
    """
    cons = s.equations + (sphere,)
    x = x0
    radius = float(np.linalg.norm(x0))
    step = 0.1 * radius
    val = float(c @ f(x))
    for _ in range(iters):
        N = PolyMap(cons).jacobian(x).T
        Q, _ = np.linalg.qr(N)
        g = c @ f.jacobian(x)
        g = g - Q @ (Q.T @ g)
        gn = float(np.linalg.norm(g))
        if gn == 0:
            break
        while step > 1e-9 * radius:
            try:
                y = newton_project(cons, x - step * g / gn, tol=1e-12)
            except ProjectionError:
                step *= 0.5
                continue
            v = float(c @ f(y))
            if v < val and s.contains(y):
                x, val = y, v
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return x


def shell_milnor_points(
    f: PolyMap,
    s: Stratum,
    radius: float,
    rng: np.random.Generator,
    starts: int = 16,
    seeds: Sequence[np.ndarray] = (),
    threshold: float = CRIT_THRESHOLD,
) -> list[np.ndarray]:
    """M(f|s) intersected with the sphere of the given radius."""
    n = s.nvars
    if s.dim == 0:
        return []
    sphere = sphere_equation(n, radius)
    cands = [np.asarray(p, float) for p in seeds]
    for _ in range(starts):
        u = rng.standard_normal(n)
        cands.append(radius * u / np.linalg.norm(u))
    found = []
    for i, x0 in enumerate(cands):
        try:
            x0 = newton_project(s.equations + (sphere,), x0, tol=1e-12)
        except ProjectionError:
            continue
        if not s.contains(x0):
            continue
        if s.dim <= f.m:
            found.append(x0)
            continue
        tries = [x0]
        if i >= len(seeds):
            c = rng.standard_normal(f.m)
            c /= np.linalg.norm(c)
            tries += [_extremise(f, s, sphere, x0, c), _extremise(f, s, sphere, x0, -c)]
        for t in tries:
            x = _refine(f, s, t, with_rho=True, radius=radius, threshold=threshold)
            if x is not None:
                found.append(x)
    return _dedupe(found, 1e-7 * radius)


def _norm_route(f, s, schedule, rng, starts, threshold, return_shells=False):
    shells, vals = [], []
    prev: list = []
    radii = schedule.radii
    for k, R in enumerate(radii):
        seeds = [p * (R / radii[k - 1]) for p in prev] if k else []
        pts = shell_milnor_points(f, s, R, rng, starts, seeds, threshold)
        shells.append(pts)
        vals.append([f(p) for p in pts])
        prev = pts
    branches = track_branches(shells, vals)
    atoms = [
        _branch_atom(b, s.id, "norm")
        for b in branches
        if b.end == len(radii) - 1 and contracts(b.values)
    ]
    if return_shells:
        return atoms, shells
    return atoms


def _frontier_route(f, s, W, rng, region, r0, n_scales, threshold, samples):
    atoms = []
    for beta in W.frontier_of(s.id):
        qs = _quiet_sample(beta, region, 1 if beta.dim == 0 else samples, int(rng.integers(2**31)))
        qs = _dedupe(list(qs), 1e-9)
        for q in qs:
            current, final = [q], None
            for k in range(n_scales):
                r = r0 / 2**k
                found = []
                for c in current:
                    for _ in range(6):
                        u = rng.standard_normal(s.nvars)
                        x0 = c + r * u / np.linalg.norm(u)
                        if s.dim <= f.m:
                            try:
                                x = s.project(x0)
                            except ProjectionError:
                                continue
                            x = x if s.contains(x) else None
                        else:
                            x = _refine(f, s, x0, with_rho=True, threshold=threshold)
                        if x is None:
                            continue
                        try:
                            foot = beta.project(x)
                        except ProjectionError:
                            continue
                        if beta.contains(foot) and 0 < np.linalg.norm(x - foot) <= 2 * r:
                            found.append((x, foot))
                if not found:
                    final = None
                    break
                found.sort(key=lambda p: float(np.linalg.norm(p[0] - p[1])))
                final = found[:4]
                current = _dedupe([ft for _, ft in final], 1e-12)
            if final is None:
                continue
            center = np.atleast_1d(f(final[0][1]))
            vals = [np.atleast_1d(f(x)) for x, _ in final]
            radius = float(max(np.linalg.norm(v - center) for v in vals))
            ev = [Evidence(float(np.linalg.norm(x)), tuple(map(float, v)), s.id, "frontier")
                  for (x, _), v in zip(final, vals)]
            atoms.append(Atom(center, radius, ev))
    return atoms


def s_infinity_estimate(
    f: PolyMap,
    s: Stratum,
    W: Stratification,
    schedule: Schedule = Schedule(),
    seed: int = 0,
    starts: int = 16,
    region=None,
    frontier_r0: float = 0.1,
    frontier_scales: int = 14,
    frontier_samples: int = 4,
    threshold: float = CRIT_THRESHOLD,
) -> LimitValueSet:
    """Limits of f along Milnor points of s escaping to infinity or to the frontier."""
    rng = np.random.default_rng(seed)
    region = region or Box.cube(s.nvars, 10.0)
    atoms = _norm_route(f, s, schedule, rng, starts, threshold)
    atoms += _frontier_route(f, s, W, rng, region, frontier_r0, frontier_scales, threshold, frontier_samples)
    return LimitValueSet(f.m, atoms).merged()


# ---------------------------------------------------------------------------
# Rabier's asymptotic critical values


def _kinf_shell(F: PolyMap, R: float, rng, starts: int, seeds) -> list[tuple]:
    n, m = F.nvars, F.m

    def fun(z):
        u, phi = z[:n], z[n:]
        nu = np.linalg.norm(u)
        x = R * u / nu
        return np.concatenate([R * (F.jacobian(x).T @ (phi / np.linalg.norm(phi))), [nu - 1.0]])

    cands = [p / np.linalg.norm(p) for p in seeds]
    for _ in range(starts):
        u = rng.standard_normal(n)
        cands.append(u / np.linalg.norm(u))
    out = []
    for u0 in cands:
        J = F.jacobian(R * u0)
        phi0 = np.linalg.svd(J)[0][:, -1] if m > 1 else np.ones(1)
        try:
            sol = least_squares(fun, np.concatenate([u0, phi0]), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=400 * (n + m))
        except ValueError:
            sol = least_squares(fun, np.concatenate([u0, phi0]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        u = sol.x[:n]
        x = R * u / np.linalg.norm(u)
        out.append((x, R * nu_min_singular(F.jacobian(x))))
    pts, keep = [], []
    for x, p in sorted(out, key=lambda t: t[1]):
        if all(np.linalg.norm(x - q) > 1e-7 * R for q in pts):
            pts.append(x)
            keep.append((x, p))
    return keep


def k_infinity_estimate(
    F: PolyMap,
    schedule: Schedule = Schedule(),
    seed: int = 0,
    starts: int = 16,
) -> LimitValueSet:
    """Limits of F along branches where |x| * nu(d_x F) tends to zero."""
    if F.m > F.nvars:
        raise InputError("K_inf needs m <= n")
    rng = np.random.default_rng(seed)
    radii = schedule.radii
    shells, vals, prods = [], [], []
    prev: list = []
    for k, R in enumerate(radii):
        found = _kinf_shell(F, R, rng, starts, prev)
        shells.append([x for x, _ in found])
        vals.append([F(x) for x, _ in found])
        prods.append([p for _, p in found])
        prev = shells[-1]
    atoms = []
    for b in track_branches(shells, vals, prods):
        if b.end != len(radii) - 1 or len(b.extra) < 4:
            continue
        p = b.extra[-4:]
        to_zero = all(p[i] >= CONTRACTION * p[i + 1] for i in range(3)) or p[-1] < 1e-12
        if to_zero and contracts(b.values):
            atoms.append(_branch_atom(b, "R^n", "kinf"))
    return LimitValueSet(F.m, atoms).merged()


# ---------------------------------------------------------------------------
# the full set and the safe radius


@dataclass
class SigmaResult:
    sigma: LimitValueSet
    sing: dict
    s_inf: dict


def sigma_components(
    f: PolyMap,
    W: Stratification,
    schedule: Schedule = Schedule(),
    seed: int = 0,
    region=None,
    count: int = 32,
    starts: int = 16,
    threshold: float = CRIT_THRESHOLD,
    frontier_scales: int = 14,
) -> SigmaResult:
    """Per-stratum critical values and S_inf plus their merged union."""
    if W.dim < f.m:
        raise PreconditionError(f"dim X = {W.dim} is smaller than m = {f.m}")
    if f.nvars != W.nvars:
        raise InputError("map and stratification dimensions differ")
    region = region or Box.cube(W.nvars, 10.0)
    seeds = np.random.SeedSequence(seed).generate_state(2 * len(W.strata))
    total = LimitValueSet(f.m)
    sing, s_inf = {}, {}
    for k, s in enumerate(W.strata):
        sing[s.id] = sing_values_sample(f, s, region, count, int(seeds[2 * k]), threshold)
        s_inf[s.id] = s_infinity_estimate(f, s, W, schedule, int(seeds[2 * k + 1]), starts, region,
                                          frontier_scales=frontier_scales, threshold=threshold)
        total = total.union(sing[s.id]).union(s_inf[s.id])
    return SigmaResult(total, sing, s_inf)


def sigma_set(f: PolyMap, W: Stratification, schedule: Schedule = Schedule(), seed: int = 0, **kw) -> LimitValueSet:
    """Union over strata of critical values and S_inf, overlapping atoms merged."""
    return sigma_components(f, W, schedule, seed, **kw).sigma


def box_distance(box: Box, t) -> float:
    """Euclidean distance from t to the closed box (0 inside)."""
    t = np.atleast_1d(np.asarray(t, float))
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    return float(np.linalg.norm(np.maximum(0.0, np.maximum(lo - t, t - hi))))


@dataclass
class SafeRadius:
    radius: float
    certificate: list  # (shell radius, min distance of f(M) to the box, sample count)

    def __float__(self):
        return float(self.radius)


def find_safe_radius(
    f: PolyMap,
    W: Stratification,
    B: Box,
    schedule: Schedule = Schedule(),
    seed: int = 0,
    sigma: LimitValueSet | None = None,
    margin: float = 1e-3,
    starts: int = 16,
    threshold: float = CRIT_THRESHOLD,
) -> SafeRadius:
    """Smallest scheduled R beyond which no Milnor sample has its f-value in B.

    Shells at every scheduled radius and at the geometric midpoints are
    checked; the certificate lists the minimum distance from the sampled
    f(M) values to the closed box per shell.
    """
    if len(B.lo) != f.m:
        raise InputError("box dimension differs from m")
    if sigma is None:
        sigma = sigma_set(f, W, schedule, seed, starts=starts, threshold=threshold)
    for a in sigma:
        if box_distance(B, a.center) <= a.radius + margin:
            raise PreconditionError(
                f"closure of the box meets the non-regular value atom at {a.center} (radius {a.radius:.2e})"
            )
    rng = np.random.default_rng(seed)
    radii = schedule.radii
    checks = []
    for k, R in enumerate(radii):
        checks.append((R, True))
        if k + 1 < len(radii):
            checks.append((math.sqrt(R * radii[k + 1]), False))
    cert = []
    prev = {s.id: [] for s in W.strata}
    prev_R = None
    for R, scheduled in checks:
        dmin, npts = math.inf, 0
        for s in W.strata:
            seeds = [p * (R / prev_R) for p in prev[s.id]] if prev_R else []
            pts = shell_milnor_points(f, s, R, rng, starts, seeds, threshold)
            prev[s.id] = pts
            for p in pts:
                dmin = min(dmin, box_distance(B, f(p)))
            npts += len(pts)
        prev_R = R
        cert.append((R, dmin, npts))
    safe = None
    for i in range(len(cert) - 1, -1, -1):
        if cert[i][1] <= 0:
            break
        if checks[i][1]:
            safe = checks[i][0]
    if safe is None:
        raise SafeRadiusNotFound(
            f"Milnor points with f-values in the box persist up to R = {radii[-1]:g}"
        )
    return SafeRadius(safe, cert)
