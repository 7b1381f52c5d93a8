"""Linear subspaces of R^n, the subspace distance delta and tangent spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import Polynomial, PolyMap, as_point
from .errors import DomainError, InputError

DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace given by an orthonormal basis stored as matrix columns.

    The trivial subspace has a ``(n, 0)`` basis; every operation accepts it.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1) if B.size else np.zeros((self.ambient_dim, 0))
        if B.shape[0] != self.ambient_dim:
            raise InputError(f"basis has {B.shape[0]} rows, ambient_dim is {self.ambient_dim}")
        if B.shape[1] > self.ambient_dim:
            raise InputError("more basis columns than the ambient dimension")
        if B.shape[1] and not np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12, rtol=0):
            raise InputError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", B)

    @classmethod
    def span(cls, vectors, ambient_dim: int | None = None, rank_tol: float = 1e-12) -> "Subspace":
        """Orthonormalise the given vectors (rows or a list of 1-D arrays)."""
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        if V.size == 0:
            if ambient_dim is None:
                raise InputError("ambient_dim is required for an empty span")
            return cls.trivial(ambient_dim)
        n = V.shape[1]
        if ambient_dim is not None and ambient_dim != n:
            raise InputError("vector length differs from ambient_dim")
        U, s, _ = np.linalg.svd(V.T, full_matrices=False)
        rank = int(np.sum(s > rank_tol * max(s[0], 1e-300))) if s.size else 0
        return cls(n, U[:, :rank])

    @classmethod
    def trivial(cls, n: int) -> "Subspace":
        return cls(n, np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, np.eye(n))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, v) -> np.ndarray:
        return self.basis @ (self.basis.T @ np.asarray(v, dtype=float))

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, v, tol: float = 1e-10) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.project(v)) <= tol * max(1.0, np.linalg.norm(v)))

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


def subspace_delta(V1: Subspace, V2: Subspace) -> float:
    """sup over unit a in V1 of |a - proj_V2(a)|.

    Equals the largest singular value of (I - P_V2) restricted to V1, so the
    value lies in [0, 1] and vanishes iff V1 is contained in V2. Not symmetric.
    """
    if V1.ambient_dim != V2.ambient_dim:
        raise InputError("subspaces live in different ambient dimensions")
    if V1.dim == 0:
        return 0.0
    residual = V1.basis - V2.basis @ (V2.basis.T @ V1.basis)
    s = np.linalg.svd(residual, compute_uv=False)
    return float(min(1.0, s[0]))


def _null_space(A: np.ndarray, n: int, rank_tol: float) -> np.ndarray:
    if A.size == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    return Vt[rank:].T


def tangent_space(
    eqs: Sequence[Polynomial],
    x,
    rank_tol: float = DEFAULT_RANK_TOL,
    residual_tol: float | None = None,
) -> Subspace:
    """Null space of the Jacobian of ``eqs`` at ``x``.

    Numerical rank counts singular values above ``rank_tol * sigma_max``.
    ``residual_tol`` (default ``max(rank_tol, 1e-9)``) guards that ``x``
    actually lies on the zero set.
    """
    eqs = list(eqs)
    x = as_point(x)
    n = x.shape[0]
    if not eqs:
        return Subspace.full(n)
    F = PolyMap(eqs)
    if F.nvars != n:
        raise InputError("equation and point dimensions differ")
    tol = max(rank_tol, 1e-9) if residual_tol is None else residual_tol
    res = float(np.max(np.abs(F(x))))
    if res > tol * max(1.0, float(np.linalg.norm(x)) ** max(p.degree for p in eqs)):
        raise InputError(f"point is not on the zero set (residual {res:.3e})")
    return Subspace(n, _null_space(F.jacobian(x), n, rank_tol))


def sphere_tangent_intersection(T: Subspace, x) -> Subspace:
    """{v in T : <x, v> = 0}, i.e. T intersected with the tangent of the sphere through x."""
    x = as_point(x, T.ambient_dim)
    nx = float(np.linalg.norm(x))
    if nx == 0.0:
        raise DomainError("sphere tangent is undefined at the origin")
    if T.dim == 0:
        return T
    # kernel of the functional v -> <x/|x|, v> on T, in T-coordinates
    c = (T.basis.T @ x) / nx
    if np.linalg.norm(c) < 1e-14:
        return T
    _, _, Vt = np.linalg.svd(c.reshape(1, -1), full_matrices=True)
    B = T.basis @ Vt[1:].T
    # one re-orthonormalisation pass keeps the basis orthonormal to 1e-15
    Q, _ = np.linalg.qr(B)
    return Subspace(T.ambient_dim, Q[:, : B.shape[1]])


def nu_min_singular(J) -> float:
    """Rabier's nu: inf over unit covectors phi of |J^T phi| = smallest singular value."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m, n = J.shape
    if m > n:
        raise InputError(f"nu requires m <= n, got a {m}x{n} matrix (degenerate: nu = 0)")
    return float(np.linalg.svd(J, compute_uv=False)[-1])
