"""Scaled monomial bases, quadrature on polygons and segments, and
L2-orthonormal polynomial bases.

The monomial ordering is graded lexicographic everywhere:
1, x, y, x^2, xy, y^2, ... so that the basis of degree <= l is always a
leading slice of the basis of degree <= l' for l' >= l.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .geometry import polygon_area_centroid, star_center


class QuadratureError(Exception):
    """Raised when a quadrature rule cannot be constructed."""


class DegenerateElementError(Exception):
    """Raised when a local polynomial system is numerically singular."""


def n_poly(degree: int) -> int:
    """Dimension of the 2D polynomial space of degree up to `degree`."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(degree: int) -> tuple[tuple[int, int], ...]:
    """Graded-lex multi-indices (a1, a2) with a1 + a2 <= degree."""
    out = []
    for d in range(degree + 1):
        for a1 in range(d, -1, -1):
            out.append((a1, d - a1))
    return tuple(out)


def index_of(alpha: tuple[int, int]) -> int:
    """Position of a multi-index in the graded-lex ordering."""
    a1, a2 = alpha
    d = a1 + a2
    return n_poly(d - 1) + (d - a1)


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """Monomials ((x - center)/scale)^a1 * ((y - center)/scale)^a2.

    `center` is the element centroid and `scale` its diameter, so that
    the basis values are O(1) on the element.
    """

    center: np.ndarray
    scale: float
    degree: int

    @property
    def dim(self) -> int:
        return n_poly(self.degree)

    @property
    def indices(self) -> tuple[tuple[int, int], ...]:
        return multi_indices(self.degree)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Values at `points` (n, 2); returns (n, dim) in graded-lex order."""
        pts = np.atleast_2d(points)
        xi = (pts - self.center) / self.scale
        # powers up to degree, reused across indices
        px = np.ones((len(pts), self.degree + 1))
        py = np.ones((len(pts), self.degree + 1))
        for d in range(1, self.degree + 1):
            px[:, d] = px[:, d - 1] * xi[:, 0]
            py[:, d] = py[:, d - 1] * xi[:, 1]
        vals = np.empty((len(pts), self.dim))
        for i, (a1, a2) in enumerate(self.indices):
            vals[:, i] = px[:, a1] * py[:, a2]
        return vals

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Gradients at `points`; returns (n, dim, 2).

        Each differentiation contributes a factor 1/scale.
        """
        pts = np.atleast_2d(points)
        xi = (pts - self.center) / self.scale
        px = np.ones((len(pts), self.degree + 1))
        py = np.ones((len(pts), self.degree + 1))
        for d in range(1, self.degree + 1):
            px[:, d] = px[:, d - 1] * xi[:, 0]
            py[:, d] = py[:, d - 1] * xi[:, 1]
        g = np.zeros((len(pts), self.dim, 2))
        for i, (a1, a2) in enumerate(self.indices):
            if a1 > 0:
                g[:, i, 0] = a1 * px[:, a1 - 1] * py[:, a2] / self.scale
            if a2 > 0:
                g[:, i, 1] = a2 * px[:, a1] * py[:, a2 - 1] / self.scale
        return g

    def derivative_matrix(self, axis: int) -> np.ndarray:
        """Matrix mapping coefficients in this basis to coefficients of the
        partial derivative in the degree-(l-1) basis."""
        rows = n_poly(self.degree - 1)
        mat = np.zeros((rows, self.dim))
        for j, (a1, a2) in enumerate(self.indices):
            a = (a1, a2)[axis]
            if a == 0:
                continue
            target = (a1 - 1, a2) if axis == 0 else (a1, a2 - 1)
            mat[index_of(target), j] = a / self.scale
        return mat

    def laplacian_matrix(self) -> np.ndarray:
        """Coefficients-to-coefficients Laplacian, degree l -> l - 2."""
        if self.degree < 2:
            return np.zeros((0, self.dim))
        dx = self.derivative_matrix(0)
        dy = self.derivative_matrix(1)
        sub = ScaledMonomialBasis(self.center, self.scale, self.degree - 1)
        return sub.derivative_matrix(0) @ dx + sub.derivative_matrix(1) @ dy


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)
    exactness_degree: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def edge_quadrature(p0: np.ndarray, p1: np.ndarray, target_degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment p0-p1, exact to `target_degree`.

    Weights sum to the segment length.
    """
    n = max(1, (target_degree + 2) // 2)
    t, w = gauss_legendre_01(n)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    length = float(np.linalg.norm(p1 - p0))
    return QuadratureRule(pts, w * length, 2 * n - 1)


@lru_cache(maxsize=None)
def _triangle_rule_ref(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical-product Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Positive weights, interior points, exact for total degree `degree`.
    """
    n = max(1, (degree + 2) // 2)
    s_gl, w_gl = gauss_legendre_01(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    s_j = (xj + 1.0) / 2.0
    w_j = wj / 4.0  # maps to weight (1 - s) on [0, 1]
    # x = s, y = t (1 - s); Jacobian (1 - s) absorbed by the Jacobi weight
    X, Y = np.meshgrid(s_j, s_gl, indexing="ij")
    pts = np.column_stack([X.ravel(), (Y * (1.0 - X)).ravel()])
    wts = np.outer(w_j, w_gl).ravel()
    return pts, wts


def triangle_quadrature(v0, v1, v2, target_degree: int) -> QuadratureRule:
    ref_pts, ref_wts = _triangle_rule_ref(target_degree)
    v0 = np.asarray(v0, float)
    e1 = np.asarray(v1, float) - v0
    e2 = np.asarray(v2, float) - v0
    jac = e1[0] * e2[1] - e1[1] * e2[0]
    pts = v0[None, :] + np.outer(ref_pts[:, 0], e1) + np.outer(ref_pts[:, 1], e2)
    return QuadratureRule(pts, ref_wts * jac, target_degree)


def polygon_quadrature(
    verts: np.ndarray, target_degree: int, star: np.ndarray | None = None
) -> QuadratureRule:
    """Quadrature on a simple CCW polygon, exact to `target_degree`.

    Built by fanning triangles from a star center (a point of the polygon
    kernel), so it works for the concave elements too.  Raises
    QuadratureError when the polygon has an empty kernel.
    """
    verts = np.asarray(verts, dtype=float)
    if star is None:
        try:
            star = star_center(verts)
        except ValueError as exc:
            raise QuadratureError(str(exc)) from None
    pts, wts = [], []
    n = len(verts)
    for i in range(n):
        rule = triangle_quadrature(star, verts[i], verts[(i + 1) % n], target_degree)
        pts.append(rule.points)
        wts.append(rule.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), target_degree)


@dataclass(frozen=True)
class OrthonormalBasis:
    """L2(P)-orthonormal polynomials as combinations of scaled monomials.

    `coeffs` is lower triangular: orthonormal_i = sum_j coeffs[i, j] * m_j.
    """

    underlying: ScaledMonomialBasis
    coeffs: np.ndarray

    def eval(self, points: np.ndarray) -> np.ndarray:
        return self.underlying.eval(points) @ self.coeffs.T


def mass_matrix(basis: ScaledMonomialBasis, quad: QuadratureRule) -> np.ndarray:
    """L2 Gram matrix of the monomials under the given quadrature."""
    vals = basis.eval(quad.points)
    m = vals.T @ (quad.weights[:, None] * vals)
    return 0.5 * (m + m.T)


def gram_schmidt(
    verts: np.ndarray, degree: int, quad: QuadratureRule | None = None
) -> OrthonormalBasis:
    """Modified Gram-Schmidt of the scaled monomials in the L2(P) product.

    `quad` must be exact to 2 * degree; it is constructed if omitted.
    """
    verts = np.asarray(verts, dtype=float)
    if quad is None:
        quad = polygon_quadrature(verts, 2 * degree)
    _, centroid = polygon_area_centroid(verts)
    from .geometry import polygon_diameter

    basis = ScaledMonomialBasis(centroid, polygon_diameter(verts), degree)
    vals = basis.eval(quad.points)  # (nq, dim)
    w = quad.weights
    dim = basis.dim
    coeffs = np.eye(dim)
    q = vals.copy()
    for i in range(dim):
        for j in range(i):
            r = float(np.sum(w * q[:, j] * q[:, i]))
            q[:, i] -= r * q[:, j]
            coeffs[i] -= r * coeffs[j]
        norm2 = float(np.sum(w * q[:, i] ** 2))
        if norm2 <= 1e-28:
            raise DegenerateElementError(
                f"Gram matrix numerically singular at basis index {i}"
            )
        nrm = np.sqrt(norm2)
        q[:, i] /= nrm
        coeffs[i] /= nrm
    return OrthonormalBasis(basis, coeffs)
