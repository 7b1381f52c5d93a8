"""Sparse multivariate polynomials, polynomial maps and Gauss-Newton projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, ProjectionError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50


def as_point(x, nvars: int | None = None) -> np.ndarray:
    """Validate a point: 1-D, finite, optionally of length ``nvars``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"point must be 1-D, got shape {x.shape}")
    if nvars is not None and x.shape[0] != nvars:
        raise InputError(f"point has {x.shape[0]} coordinates, expected {nvars}")
    if not np.all(np.isfinite(x)):
        raise InputError("point has non-finite coordinates")
    return x


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial in ``nvars`` variables stored as a sparse term list.

    ``terms`` is a sequence of ``(coefficient, exponents)`` pairs. Duplicate
    exponent lists are summed and zero coefficients dropped on construction,
    so two polynomials are equal iff their term dictionaries are equal.
    """

    nvars: int
    terms: tuple = ()
    _coeffs: np.ndarray = field(init=False, repr=False)
    _exps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.nvars) != self.nvars or self.nvars < 1:
            raise InputError(f"nvars must be a positive integer, got {self.nvars!r}")
        acc: dict[tuple, float] = {}
        for term in self.terms:
            try:
                coeff, exps = term
            except (TypeError, ValueError):
                raise InputError(f"term must be (coefficient, exponents), got {term!r}") from None
            try:
                exps = tuple(int(e) for e in exps)
                coeff = float(coeff)
            except (TypeError, ValueError):
                raise InputError(f"term must be (coefficient, exponents), got {term!r}") from None
            if len(exps) != self.nvars:
                raise InputError(
                    f"exponent list {list(exps)} has length {len(exps)}, expected {self.nvars}"
                )
            if any(e < 0 for e in exps):
                raise InputError(f"negative exponent in {list(exps)}")
            if not np.isfinite(coeff):
                raise InputError("non-finite coefficient")
            acc[exps] = acc.get(exps, 0.0) + coeff
        terms = tuple((c, e) for e, c in sorted(acc.items()) if c != 0.0)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "nvars", int(self.nvars))
        object.__setattr__(self, "_coeffs", np.array([c for c, _ in terms], dtype=float))
        object.__setattr__(
            self,
            "_exps",
            np.array([e for _, e in terms], dtype=float).reshape(len(terms), self.nvars),
        )

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, ())

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, ((value, (0,) * nvars),))

    @classmethod
    def variable(cls, nvars: int, j: int) -> "Polynomial":
        exps = [0] * nvars
        exps[j] = 1
        return cls(nvars, ((1.0, exps),))

    @classmethod
    def norm_squared(cls, nvars: int) -> "Polynomial":
        """rho(x) = x_1^2 + ... + x_n^2."""
        terms = []
        for j in range(nvars):
            exps = [0] * nvars
            exps[j] = 2
            terms.append((1.0, exps))
        return cls(nvars, terms)

    @classmethod
    def from_json(cls, nvars: int, data) -> "Polynomial":
        return cls(nvars, [(c, e) for c, e in data])

    def to_json(self) -> list:
        return [[c, list(e)] for c, e in self.terms]

    # algebra ---------------------------------------------------------------

    def _check_same(self, other: "Polynomial"):
        if other.nvars != self.nvars:
            raise InputError("polynomials live in different numbers of variables")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, other)
        self._check_same(other)
        return Polynomial(self.nvars, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, [(-c, e) for c, e in self.terms])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial(self.nvars, [(c * float(other), e) for c, e in self.terms])
        self._check_same(other)
        terms = [
            (c1 * c2, tuple(a + b for a, b in zip(e1, e2)))
            for c1, e1 in self.terms
            for c2, e2 in other.terms
        ]
        return Polynomial(self.nvars, terms)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and other.nvars == self.nvars
            and other.terms == self.terms
        )

    def __hash__(self):
        return hash((self.nvars, self.terms))

    @property
    def degree(self) -> int:
        return int(max((sum(e) for _, e in self.terms), default=0))

    def derivative(self, j: int) -> "Polynomial":
        """Symbolic partial derivative with respect to variable ``j``."""
        if not 0 <= j < self.nvars:
            raise InputError(f"variable index {j} out of range")
        terms = []
        for c, e in self.terms:
            if e[j] > 0:
                d = list(e)
                d[j] -= 1
                terms.append((c * e[j], d))
        return Polynomial(self.nvars, terms)

    # evaluation ------------------------------------------------------------

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at one point (shape ``(n,)``) or a batch (shape ``(..., n)``)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nvars,):
            raise InputError(
                f"point dimension {x.shape[-1:] or 0} does not match nvars={self.nvars}"
            )
        if not self.terms:
            out = np.zeros(x.shape[:-1])
        else:
            monomials = np.prod(x[..., None, :] ** self._exps, axis=-1)
            out = monomials @ self._coeffs
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        if not self.terms:
            return f"Polynomial({self.nvars}, 0)"
        parts = []
        for c, e in self.terms:
            mono = "*".join(
                f"x{j + 1}" + (f"^{k}" if k > 1 else "") for j, k in enumerate(e) if k
            )
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial({self.nvars}, {' + '.join(parts)})"


class PolyMap:
    """Polynomial map F: R^n -> R^m with symbolically differentiated Jacobian."""

    def __init__(self, components: Sequence[Polynomial]):
        components = tuple(components)
        if not components:
            raise InputError("a polynomial map needs at least one component")
        nvars = components[0].nvars
        if any(p.nvars != nvars for p in components):
            raise InputError("all components must share nvars")
        self.components = components
        self.nvars = nvars
        self._grad = tuple(tuple(p.derivative(j) for j in range(nvars)) for p in components)
        self._val_exps, self._val_coeffs = _stack(components, nvars)
        flat = [d for row in self._grad for d in row]
        self._jac_exps, self._jac_coeffs = _stack(flat, nvars)

    @property
    def m(self) -> int:
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nvars,):
            raise InputError(f"point dimension does not match nvars={self.nvars}")
        return _monomials(x, self._val_exps) @ self._val_coeffs.T

    def jacobian(self, x) -> np.ndarray:
        x = as_point(x, self.nvars)
        return (self._jac_coeffs @ _monomials(x, self._jac_exps)).reshape(self.m, self.nvars)

    def to_json(self) -> list:
        return [p.to_json() for p in self.components]

    def __repr__(self):
        return f"PolyMap({list(self.components)!r})"


def _stack(polys: Sequence[Polynomial], nvars: int):
    """Shared monomial table and (len(polys) x n_monomials) coefficient matrix."""
    index: dict[tuple, int] = {}
    for p in polys:
        for _, e in p.terms:
            index.setdefault(e, len(index))
    exps = np.zeros((max(len(index), 1), nvars))
    for e, k in index.items():
        exps[k] = e
    coeffs = np.zeros((len(polys), exps.shape[0]))
    for i, p in enumerate(polys):
        for c, e in p.terms:
            coeffs[i, index[e]] = c
    return exps, coeffs


def _monomials(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    return np.prod(x[..., None, :] ** exps, axis=-1)


def poly_eval(p: Polynomial, x) -> float:
    """Evaluate ``p`` at the single point ``x``."""
    return float(p(as_point(x, p.nvars)))


def jacobian(F: PolyMap | Sequence[Polynomial], x) -> np.ndarray:
    """m x n matrix of partial derivatives of ``F`` at ``x``."""
    if not isinstance(F, PolyMap):
        F = PolyMap(F)
    return F.jacobian(x)


def gauss_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    z0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    rcond: float = 1e-12,
) -> np.ndarray:
    """Minimal-norm Gauss-Newton for (possibly underdetermined) systems r(z) = 0.

    Each step is ``-pinv(J) r``. Raises ProjectionError if ``max|r| < tol`` is
    not reached within ``max_iter`` iterations.
    """
    z = np.array(z0, dtype=float)
    r = np.atleast_1d(residual(z))
    for _ in range(max_iter):
        res = float(np.max(np.abs(r))) if r.size else 0.0
        if res < tol:
            return z
        J = np.atleast_2d(jac(z))
        step = np.linalg.lstsq(J, -r, rcond=rcond)[0]
        if not np.all(np.isfinite(step)):
            raise ProjectionError("non-finite Gauss-Newton step", res, z)
        # backtrack on divergence; the full step is kept when it helps
        t = 1.0
        for _ in range(8):
            z_new = z + t * step
            r_new = np.atleast_1d(residual(z_new))
            if np.max(np.abs(r_new)) < res or t < 0.02:
                break
            t *= 0.5
        z, r = z_new, r_new
    res = float(np.max(np.abs(r))) if r.size else 0.0
    if res < tol:
        return z
    raise ProjectionError("Gauss-Newton did not converge", res, z)


def newton_project(
    eqs: Iterable[Polynomial],
    x0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Project ``x0`` onto the common zero set of ``eqs``.

    Gauss-Newton with pseudoinverse steps, so the result is (locally) the
    nearest point of the zero set. An empty system returns ``x0`` unchanged.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    eqs = list(eqs)
    x0 = as_point(x0)
    if not eqs:
        return x0.copy()
    if any(e.nvars != x0.shape[0] for e in eqs):
        raise InputError("equation and point dimensions differ")
    system = PolyMap(eqs)
    return gauss_newton(system, system.jacobian, x0, tol=tol, max_iter=max_iter)
