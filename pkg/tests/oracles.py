"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle recomputes its quantity by a
different route (closed forms, finite differences, KKT systems, principal
angles, brute-force search).
"""

import numpy as np
from scipy.linalg import null_space, subspace_angles


def broughton(x, y):
    return x + x * x * y


def broughton_milnor_det(x, y):
    """det of [[df/dx, df/dy], [x, y]] for f = x + x^2 y, up to the factor 2."""
    return y * (1 + 2 * x * y) - x**3


def broughton_branch_value(y):
    """f on the asymptotic Milnor branch x = -1/(2y) + O(y^-4)."""
    x = -1.0 / (2.0 * y)
    return broughton(x, y)


def broughton_fiber_component_count(t):
    """f^-1(t) = {x = 0} u {xy = -1} for t = 0; a graph over x != 0 otherwise."""
    return 3 if t == 0 else 2


def finite_difference_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, float)
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h)
    return J


def delta_by_angles(B1, B2):
    """sup_{a in V1, |a|=1} dist(a, V2) via principal angles (dim V1 <= dim V2)."""
    if B1.shape[1] == 0:
        return 0.0
    if B2.shape[1] == 0:
        return 1.0
    if B1.shape[1] > B2.shape[1]:
        return 1.0
    return float(np.sin(np.max(subspace_angles(B1, B2))))


def nu_by_eigenvalues(J):
    """Smallest singular value of an m x n matrix (m <= n) as sqrt(lambda_min(J J^T))."""
    J = np.atleast_2d(J)
    return float(np.sqrt(max(np.linalg.eigvalsh(J @ J.T)[0], 0.0)))


def min_norm_kkt(J, T, e):
    """argmin |v| subject to v in span(T), J v = e, via the KKT system."""
    A = J @ T
    k = T.shape[1]
    K = np.block([[np.eye(k), A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
    rhs = np.concatenate([np.zeros(k), e])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return T @ sol[:k]


def min_norm_brute_force(J, T, e, samples=10_000, rounds=3):
    """Zooming grid search over the affine solution set (null space of dim <= 1)."""
    A = J @ T
    c0 = np.linalg.lstsq(A, e, rcond=None)[0] + 0.37  # any particular solution works
    c0 = c0 - np.linalg.lstsq(A, A @ c0 - e, rcond=None)[0]
    N = null_space(A)
    if N.shape[1] == 0:
        return T @ c0
    if N.shape[1] > 1:
        raise ValueError("brute force handles a one-dimensional solution line only")
    n = N[:, 0]
    center, half = 0.0, 2.0 * (1.0 + np.linalg.norm(c0))
    for _ in range(rounds):
        s = np.linspace(center - half, center + half, samples)
        norms = np.linalg.norm(c0[None, :] + s[:, None] * n[None, :], axis=1)
        k = int(np.argmin(norms))
        center, half = s[k], 4.0 * half / samples
    return T @ (c0 + center * n)


def circle_flow_endpoint(t, radius=5.0):
    """Flow of the sphere-tangent lift of f = x from (0, radius)."""
    return np.array([t, np.sqrt(radius**2 - t**2)])


def sphere_tangent_lift_linear(a, b):
    """V with V.(a, b) = 0 and V_1 = 1, for f = x."""
    return np.array([1.0, -a / b])
