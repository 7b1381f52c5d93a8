"""Affine stratifications, sampling on strata, and numerical regularity audits.

Regularity conditions are statements about limits. The audits discretise
them over a geometric ladder of radii ``r, r/2, r/4, ...`` around a base
point and judge the trend of the measured quantity; the ladder and the
thresholds are recorded in every report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Polynomial,
    PolyMap,
    as_point,
    newton_project,
)
from .errors import ConstantRankError, InputError, ProjectionError, StratificationError
from .geometry import DEFAULT_RANK_TOL, Subspace, subspace_delta, tangent_space

ON_STRATUM_TOL = 1e-9


class CoverageWarning(UserWarning):
    """Fewer samples than requested could be produced."""


class DomainWarning(UserWarning):
    """An audit hypothesis is degenerate (e.g. a 0-dimensional stratum)."""


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise InputError(f"invalid box {self.lo} .. {self.hi}")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @classmethod
    def cube(cls, n: int, half_width: float, center=None) -> "Box":
        c = np.zeros(n) if center is None else np.asarray(center, float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


@dataclass(frozen=True)
class Shell:
    """Spherical shell rmin <= |x| <= rmax around the origin."""

    nvars: int
    rmin: float
    rmax: float

    def __post_init__(self):
        if not 0 <= self.rmin <= self.rmax:
            raise InputError(f"invalid shell radii {self.rmin}, {self.rmax}")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.standard_normal(self.nvars)
        u /= np.linalg.norm(u)
        return u * rng.uniform(self.rmin, self.rmax)

    def contains(self, x) -> bool:
        r = float(np.linalg.norm(x))
        return self.rmin * (1 - 1e-12) <= r <= self.rmax * (1 + 1e-12)


def sphere_equation(nvars: int, radius: float, center=None) -> Polynomial:
    """|x - c|^2 / radius^2 - 1, scaled so the residual is relative."""
    c = np.zeros(nvars) if center is None else np.asarray(center, float)
    terms = [(float(c @ c) / radius**2 - 1.0, [0] * nvars)]
    for j in range(nvars):
        e2 = [0] * nvars
        e2[j] = 2
        e1 = [0] * nvars
        e1[j] = 1
        terms.append((1.0 / radius**2, e2))
        terms.append((-2.0 * c[j] / radius**2, e1))
    return Polynomial(nvars, terms)


# ---------------------------------------------------------------------------
# strata


@dataclass(frozen=True, eq=False)
class Stratum:
    """Smooth stratum {equations = 0, inequalities > 0} of declared dimension."""

    id: str
    nvars: int
    equations: tuple = ()
    inequalities: tuple = ()
    dim: int | None = None

    def __post_init__(self):
        eqs = tuple(self.equations)
        ineqs = tuple(self.inequalities)
        for p in eqs + ineqs:
            if p.nvars != self.nvars:
                raise InputError(f"stratum {self.id!r}: polynomial nvars differs from {self.nvars}")
        object.__setattr__(self, "equations", eqs)
        object.__setattr__(self, "inequalities", ineqs)
        dim = self.nvars - len(eqs) if self.dim is None else int(self.dim)
        if not 0 <= dim <= self.nvars:
            raise InputError(f"stratum {self.id!r}: dimension {dim} out of range")
        object.__setattr__(self, "dim", dim)

    def residual(self, x) -> float:
        if not self.equations:
            return 0.0
        return float(max(abs(e(x)) for e in self.equations))

    def satisfies_inequalities(self, x) -> bool:
        return all(g(x) > 0 for g in self.inequalities)

    def contains(self, x, tol: float = ON_STRATUM_TOL) -> bool:
        return self.residual(x) <= tol and self.satisfies_inequalities(x)

    def project(self, x0, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
        return newton_project(self.equations, x0, tol=tol, max_iter=max_iter)

    def tangent(self, x, rank_tol: float = DEFAULT_RANK_TOL) -> Subspace:
        return tangent_space(self.equations, x, rank_tol=rank_tol, residual_tol=1e-6)


@dataclass(frozen=True, eq=False)
class Stratification:
    """Finite stratification with a declared frontier relation.

    ``frontier`` holds pairs ``(beta, alpha)`` meaning X_beta lies in the
    closure of X_alpha.
    """

    nvars: int
    strata: tuple
    frontier: tuple = ()
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        strata = tuple(self.strata)
        if not strata:
            raise InputError("a stratification needs at least one stratum")
        index = {}
        for s in strata:
            if s.nvars != self.nvars:
                raise InputError(f"stratum {s.id!r} has nvars {s.nvars}, expected {self.nvars}")
            if s.id in index:
                raise InputError(f"duplicate stratum id {s.id!r}")
            index[s.id] = s
        pairs = tuple((str(b), str(a)) for b, a in self.frontier)
        for b, a in pairs:
            for sid in (b, a):
                if sid not in index:
                    raise InputError(f"frontier pair ({b!r}, {a!r}) names unknown stratum {sid!r}")
            if a == b:
                raise InputError(f"frontier relation must be irreflexive, got ({b!r}, {a!r})")
        declared = set(pairs)
        for b, a in pairs:
            for b2, a2 in pairs:
                if a == b2 and (b, a2) not in declared:
                    raise InputError(
                        f"frontier relation is not transitive: ({b!r},{a!r}) and "
                        f"({b2!r},{a2!r}) declared but ({b!r},{a2!r}) missing"
                    )
        object.__setattr__(self, "strata", strata)
        object.__setattr__(self, "frontier", pairs)
        object.__setattr__(self, "_index", index)

    @classmethod
    def trivial(cls, nvars: int) -> "Stratification":
        return cls(nvars, (Stratum("X", nvars),))

    def __getitem__(self, sid: str) -> Stratum:
        try:
            return self._index[sid]
        except KeyError:
            raise InputError(f"unknown stratum {sid!r}") from None

    def __iter__(self):
        return iter(self.strata)

    @property
    def dim(self) -> int:
        return max(s.dim for s in self.strata)

    def frontier_of(self, alpha: str) -> list[Stratum]:
        """Strata declared to lie in the closure of ``alpha``."""
        return [self[b] for b, a in self.frontier if a == alpha]


def locate_stratum(W: Stratification, x, tol: float = ON_STRATUM_TOL) -> str | None:
    """Id of the unique stratum containing ``x``, or None."""
    if tol <= 0:
        raise InputError("tol must be positive")
    x = as_point(x, W.nvars)
    hits = [s.id for s in W.strata if s.contains(x, tol)]
    if len(hits) > 1:
        raise StratificationError(f"point {x} lies on several strata: {hits}")
    return hits[0] if hits else None


def sample_stratum(s: Stratum, region, count: int, seed: int = 0, max_attempts: int | None = None) -> np.ndarray:
    """Up to ``count`` points of ``s`` inside ``region`` (Box or Shell).

    Uniform starts in the region are projected onto the stratum equations;
    for shells the target radius is imposed as an extra equation when the
    stratum has positive dimension. Deterministic in ``seed``.
    """
    if count <= 0:
        raise InputError("count must be positive")
    rng = np.random.default_rng(seed)
    budget = max_attempts or 50 * count
    out = []
    for _ in range(budget):
        if len(out) >= count:
            break
        x0 = region.sample(rng)
        x = None
        if isinstance(region, Shell) and s.dim > 0 and region.rmax > 0:
            r = rng.uniform(max(region.rmin, 1e-12), region.rmax)
            try:
                x = newton_project(s.equations + (sphere_equation(s.nvars, r),), x0)
            except ProjectionError:
                x = None
        if x is None:
            try:
                x = s.project(x0)
            except ProjectionError:
                continue
        if region.contains(x) and s.contains(x):
            out.append(x)
    if len(out) < count:
        msg = f"stratum {s.id!r}: {len(out)} of {count} samples produced"
        warnings.warn(msg, CoverageWarning, stacklevel=2)
    return np.array(out).reshape(len(out), s.nvars)


def point_at_distance(s: Stratum, center, radius: float, direction, tries: int = 16, rng=None):
    """A point of ``s`` at distance ``radius`` from ``center``, or None.

    Projects ``center + radius*direction`` onto the stratum intersected with
    the sphere of that radius; falls back to plain projection for strata of
    dimension 0.
    """
    center = np.asarray(center, float)
    rng = np.random.default_rng(0) if rng is None else rng
    u = np.asarray(direction, float)
    for attempt in range(tries):
        if attempt:
            u = rng.standard_normal(center.shape[0])
        u = u / np.linalg.norm(u)
        x0 = center + radius * u
        try:
            if s.dim > 0:
                x = newton_project(s.equations + (sphere_equation(s.nvars, radius, center),), x0)
            else:
                x = s.project(x0)
        except ProjectionError:
            continue
        if s.contains(x):
            return x
    return None


# ---------------------------------------------------------------------------
# audit reports


@dataclass
class AuditReport:
    kind: str
    alpha: str
    beta: str
    base: tuple
    scales: list
    values: list
    verdict: str
    c_estimate: float | None = None
    vacuous: bool = False
    skipped: int = 0
    settings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def rows(self) -> list[tuple]:
        pair = f"{self.alpha}/{self.beta}"
        return [(self.kind, pair, r, v, self.verdict) for r, v in zip(self.scales, self.values)]

    def summary(self) -> str:
        vals = ", ".join(f"{v:.4g}" for v in self.values)
        extra = f" C={self.c_estimate:.4g}" if self.c_estimate is not None else ""
        flag = " [vacuous]" if self.vacuous else ""
        return f"{self.kind} ({self.alpha}, {self.beta}) at {_fmt_point(self.base)}: {self.verdict}{flag}{extra} values=[{vals}]"


@dataclass
class FrontierReport:
    pairs: list  # (beta, alpha, confirmed, min approach distance)
    undeclared: list  # (beta, alpha, approach distance)

    @property
    def passed(self) -> bool:
        return all(p[2] for p in self.pairs) and not self.undeclared

    def summary(self) -> str:
        lines = [
            f"frontier ({b}, {a}): {'confirmed' if ok else 'NOT confirmed'} approach={d:.3g}"
            for b, a, ok, d in self.pairs
        ]
        lines += [f"frontier ({b}, {a}): undeclared adjacency approach={d:.3g}" for b, a, d in self.undeclared]
        return "\n".join(lines) if lines else "frontier: no declared pairs, no adjacency found"


def _fmt_point(x) -> str:
    return "(" + ", ".join(f"{float(c):.6g}" for c in x) + ")"


def _ladder(r: float, n_scales: int) -> list[float]:
    return [r / 2**k for k in range(n_scales)]


def _pair_strata(W: Stratification, pair, y):
    alpha, beta = (str(p) for p in pair)
    if (beta, alpha) not in W.frontier:
        raise InputError(f"({beta!r}, {alpha!r}) is not a declared frontier pair")
    A, B = W[alpha], W[beta]
    y = as_point(y, W.nvars)
    if not B.contains(y):
        raise InputError(f"base point {y} is not on stratum {beta!r}")
    return A, B, y


def _trend_growth(values: Sequence[float], floor: float = 1e-12) -> float:
    """Geometric-mean growth factor per halving; 1.0 for identically tiny values."""
    v = [max(float(x), floor) for x in values]
    if len(v) < 2:
        return 1.0
    return (v[-1] / v[0]) ** (1.0 / (len(v) - 1))


# ---------------------------------------------------------------------------
# frontier condition


def _approach(A: Stratum, q: np.ndarray, radii, rng) -> float | None:
    """Distance reached from q to A along the ladder; None when A is not found at some scale."""
    best = None
    for r in radii:
        found = None
        for _ in range(32):
            u = rng.standard_normal(q.shape[0])
            u /= np.linalg.norm(u)
            try:
                x = A.project(q + r * u)
            except ProjectionError:
                continue
            d = float(np.linalg.norm(x - q))
            if A.contains(x) and d <= 2 * r:
                found = d
                break
        if found is None:
            return None
        best = found
    return best


def check_frontier(
    W: Stratification,
    budget: int = 8,
    seed: int = 0,
    region=None,
    r0: float = 0.1,
    n_scales: int = 20,
    adjacency_tol: float = 1e-6,
) -> FrontierReport:
    """Audit declared frontier pairs and look for undeclared adjacencies."""
    if budget <= 0:
        raise InputError("budget must be positive")
    region = region or Box.cube(W.nvars, 1.0)
    radii = _ladder(r0, n_scales)
    samples = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverageWarning)
        for k, s in enumerate(W.strata):
            pts = sample_stratum(s, region, budget, seed=seed + 7919 * k)
            samples[s.id] = np.unique(np.round(pts, 12), axis=0) if len(pts) else pts
    rng = np.random.default_rng(seed)
    pairs, undeclared = [], []
    for b in W.strata:
        for a in W.strata:
            if a.id == b.id:
                continue
            declared = (b.id, a.id) in W.frontier
            dists = []
            for q in samples[b.id]:
                d = _approach(a, q, radii, rng)
                dists.append(np.inf if d is None else d)
            worst = max(dists) if dists else np.inf
            if declared:
                pairs.append((b.id, a.id, bool(worst < adjacency_tol), float(worst)))
            else:
                best = min(dists) if dists else np.inf
                if best < adjacency_tol:
                    undeclared.append((b.id, a.id, float(best)))
    return FrontierReport(pairs, undeclared)


# ---------------------------------------------------------------------------
# Whitney (b)


def check_whitney_b(
    W: Stratification,
    pair,
    y,
    n_sequences: int = 8,
    seed: int = 0,
    r: float = 0.1,
    n_scales: int = 4,
    threshold: float = 1e-3,
    decay: float = 1.5,
) -> AuditReport:
    """Secant-versus-tangent audit for the pair (alpha, beta) at y in X_beta.

    Reports, per scale, the largest delta(secant line, T_x X_alpha) over the
    sampled sequences. PASS when the value at the closest scale is below
    ``threshold`` or the values decay by at least ``decay`` per halving.
    """
    A, B, y = _pair_strata(W, pair, y)
    rng = np.random.default_rng(seed)
    scales = _ladder(r, n_scales)
    dirs = [rng.standard_normal(W.nvars) for _ in range(n_sequences)]
    bdirs = [rng.standard_normal(W.nvars) for _ in range(n_sequences)]
    values, skipped = [], 0
    for rk in scales:
        vals = []
        for u, v in zip(dirs, bdirs):
            x = point_at_distance(A, y, rk, u, rng=rng)
            if B.dim == 0:
                yk = y
            else:
                yk = point_at_distance(B, y, rk / 2, v, rng=rng)
            if x is None or yk is None or np.linalg.norm(x - yk) == 0:
                skipped += 1
                continue
            secant = Subspace.span([x - yk])
            vals.append(subspace_delta(secant, A.tangent(x)))
        values.append(max(vals) if vals else np.nan)
    settings = {"r": r, "n_scales": n_scales, "threshold": threshold, "decay": decay}
    if any(np.isnan(values)):
        verdict = "INCONCLUSIVE"
    elif values[-1] <= threshold or (values[0] > 0 and _trend_growth(values) <= 1 / decay):
        verdict = "PASS"
    else:
        verdict = "FAIL"
    return AuditReport("whitney_b", A.id, B.id, tuple(y), scales, values, verdict,
                       skipped=skipped, settings=settings)


# ---------------------------------------------------------------------------
# Verdier (w) and strict Thom (w_f)


def _beta_partner(B: Stratum, x, y, rk, rng):
    """Points of X_beta near y paired with x: the foot of x and one random point."""
    out = []
    if B.dim == 0:
        return [y]
    try:
        foot = B.project(x)
        if B.contains(foot) and np.linalg.norm(foot - y) <= rk:
            out.append(foot)
    except ProjectionError:
        pass
    p = point_at_distance(B, y, rk * rng.uniform(0.1, 1.0), rng.standard_normal(y.shape[0]), rng=rng)
    if p is not None:
        out.append(p)
    return out


def _ratio_audit(
    kind: str,
    W: Stratification,
    pair,
    y,
    n_pairs: int,
    seed: int,
    r: float,
    n_scales: int,
    growth_limit: float,
    space_alpha: Callable,
    space_beta: Callable,
    notes=None,
    vacuous: bool = False,
) -> AuditReport:
    A, B, y = _pair_strata(W, pair, y)
    rng = np.random.default_rng(seed)
    scales = _ladder(r, n_scales)
    values, skipped, cmax = [], 0, 0.0
    for rk in scales:
        ratios = []
        for _ in range(n_pairs):
            x = point_at_distance(A, y, rk, rng.standard_normal(W.nvars), rng=rng)
            if x is None:
                skipped += 1
                continue
            Tx = space_alpha(A, x)
            for yp in _beta_partner(B, x, y, rk, rng):
                d = float(np.linalg.norm(yp - x))
                if d == 0:
                    continue
                ratios.append(subspace_delta(space_beta(B, yp), Tx) / d)
        values.append(max(ratios) if ratios else np.nan)
        if ratios:
            cmax = max(cmax, max(ratios))
    settings = {"r": r, "n_scales": n_scales, "growth_limit": growth_limit}
    if any(np.isnan(values)):
        verdict = "INCONCLUSIVE"
    elif _trend_growth(values) > growth_limit:
        verdict = "FAIL"
    else:
        verdict = "PASS"
    return AuditReport(kind, A.id, B.id, tuple(y), scales, values, verdict, c_estimate=cmax,
                       vacuous=vacuous, skipped=skipped, settings=settings, notes=list(notes or []))


def check_verdier_w(
    W: Stratification,
    pair,
    y,
    n_pairs: int = 12,
    seed: int = 0,
    r: float = 0.1,
    n_scales: int = 4,
    growth_limit: float = 2.0,
) -> AuditReport:
    """Ratio delta(T_y' X_beta, T_x X_alpha) / |y' - x| over shrinking neighbourhoods of y.

    PASS when the per-scale maxima show no growth trend beyond
    ``growth_limit`` per halving; ``c_estimate`` is the largest ratio seen.
    A 0-dimensional X_beta makes the condition vacuous (delta is 0).
    """
    vacuous = W[str(pair[1])].dim == 0
    return _ratio_audit(
        "verdier_w", W, pair, y, n_pairs, seed, r, n_scales, growth_limit,
        lambda s, x: s.tangent(x), lambda s, x: s.tangent(x),
        notes=["X_beta is 0-dimensional; condition holds vacuously"] if vacuous else None,
        vacuous=vacuous,
    )


def restricted_kernel(s: Stratum, g: PolyMap, x, rank_tol: float = 1e-8) -> tuple[Subspace, int]:
    """(ker d(g|s)(x), rank of d(g|s)(x)) computed inside the stratum tangent."""
    T = s.tangent(x)
    if T.dim == 0:
        return T, 0
    G = g.jacobian(x) @ T.basis
    _, sv, Vt = np.linalg.svd(G, full_matrices=True)
    scale = max(1.0, float(np.linalg.norm(g.jacobian(x))))
    rank = int(np.sum(sv > rank_tol * scale))
    return Subspace(T.ambient_dim, T.basis @ Vt[rank:].T), rank


def check_wf(
    W: Stratification,
    pair,
    g: PolyMap,
    y,
    n_pairs: int = 12,
    seed: int = 0,
    r: float = 0.1,
    n_scales: int = 4,
    growth_limit: float = 2.0,
) -> AuditReport:
    """Strict Thom audit with the kernels T_{x,g} = ker d(g|stratum)(x).

    Uses delta(T_{y',g}, T_{x,g}) / |x - y'|, the same orientation as the
    Verdier audit. Raises ConstantRankError if g changes rank on a stratum.
    """
    if g.m != 1:
        raise InputError("check_wf expects a scalar function g")
    ranks = {}

    def kernel(s, x):
        K, rank = restricted_kernel(s, g, x)
        seen = ranks.setdefault(s.id, rank)
        if seen != rank:
            raise ConstantRankError(f"g restricted to {s.id!r} has rank {seen} and {rank} at samples")
        return K

    B = W[str(pair[1])]
    notes = []
    if B.dim == 0:
        notes.append("g restricted to X_beta is not a submersion (0-dimensional stratum); T_{y',g} is trivial")
        warnings.warn(notes[-1], DomainWarning, stacklevel=2)
    report = _ratio_audit("w_f", W, pair, y, n_pairs, seed, r, n_scales, growth_limit,
                          kernel, kernel, notes=notes, vacuous=B.dim == 0)
    if ranks.get(B.id, 1) < 1 and B.dim > 0:
        report.notes.append("g restricted to X_beta has rank 0")
    return report
