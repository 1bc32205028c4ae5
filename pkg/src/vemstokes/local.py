"""Per-element virtual element machinery: degree-of-freedom layout,
polynomial projector matrices, and the local Stokes matrices.

A scalar virtual function of order k on a polygon with N_V vertices is
identified by (in this fixed order)

  * its values at the vertices, CCW,
  * for k >= 2, its moments against scaled monomials of degree <= k-2 on
    each edge (edges in CCW loop order, moments by increasing degree),
  * for k >= 2, its moments against scaled monomials of degree <= k-2 on
    the element.

Edge moments are taken in a parametrization fixed globally per edge, so
the two elements sharing an edge agree on every shared functional.

All projector matrices act on that DOF ordering; vector quantities use two
stacked scalar blocks (x-component DOFs, then y-component DOFs).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .geometry import star_point
from .mesh import PolygonalMesh
from .poly import (
    DegenerateElementError,
    ScaledMonomialBasis,
    gauss_legendre_01,
    gram_schmidt,
    mass_matrix,
    multi_indices,
    index_of,
    n_poly,
    polygon_quadrature,
)


class SpaceVariant(Enum):
    REGULAR = "regular"
    ENHANCED = "enhanced"

    @property
    def l2_degree_offset(self) -> int:
        # degree of the computable orthogonal projector: k-2 or k
        return -2 if self is SpaceVariant.REGULAR else 0


class StabilizationProjector(Enum):
    ELLIPTIC = "elliptic"
    ORTHOGONAL = "orthogonal"


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_vertices: int

    @property
    def n_edge_per_edge(self) -> int:
        return self.k - 1

    @property
    def n_edge(self) -> int:
        return self.n_vertices * (self.k - 1)

    @property
    def n_cell(self) -> int:
        return n_poly(self.k - 2)

    @property
    def n_scalar(self) -> int:
        return self.n_vertices + self.n_edge + self.n_cell

    def vertex_dof(self, i: int) -> int:
        return i

    def edge_dof(self, loop_edge: int, moment: int) -> int:
        return self.n_vertices + loop_edge * (self.k - 1) + moment

    def cell_dof(self, moment: int) -> int:
        return self.n_vertices + self.n_edge + moment


def dof_layout(n_vertices: int, k: int) -> DofLayout:
    if k < 1:
        raise ValueError("order k must be >= 1")
    return DofLayout(k, n_vertices)


@lru_cache(maxsize=None)
def _edge_dof_to_coeff(k: int) -> np.ndarray:
    """Inverse of the map from P_k(E) coefficients (basis (t-1/2)^b on the
    unit parametrization) to its edge DOFs (endpoint values, then moments
    against (t-1/2)^j, j <= k-2)."""
    m = np.zeros((k + 1, k + 1))
    for b in range(k + 1):
        m[0, b] = (-0.5) ** b
        m[1, b] = 0.5**b
    for j in range(k - 1):
        for b in range(k + 1):
            if (j + b) % 2 == 0:
                m[2 + j, b] = 0.5 ** (j + b) / (j + b + 1)
    return np.linalg.inv(m)


@dataclass
class _EdgeData:
    cols: np.ndarray  # local scalar DOF ids feeding the trace on this edge
    t: np.ndarray  # Gauss nodes in the global edge parametrization
    w01: np.ndarray  # Gauss weights on [0, 1]
    points: np.ndarray  # physical node positions
    length: float
    normal: np.ndarray  # outward normal of this element
    trace: np.ndarray  # (nq, k+1): DOF values -> trace values at the nodes


class ElementOps:
    """All computable local operators of one element at order k.

    Everything expensive is computed once and cached on first use.
    """

    def __init__(self, mesh: PolygonalMesh, index: int, k: int, quad_degree: int | None = None):
        if k < 1:
            raise ValueError("order k must be >= 1")
        self.mesh = mesh
        self.index = index
        self.k = k
        el = mesh.elements[index]
        self.element = el
        self.coords = mesh.vertices[el.vertex_loop]
        self.nv = len(el.vertex_loop)
        self.layout = DofLayout(k, self.nv)
        self.area = el.area
        self.diameter = el.diameter
        self.basis = ScaledMonomialBasis(el.centroid, el.diameter, k)
        self.nk = self.basis.dim

        self.quad_degree = quad_degree if quad_degree is not None else 2 * k + 2
        star = star_point(self.coords)
        self.quad = polygon_quadrature(self.coords, self.quad_degree, star=star)
        self.mass = mass_matrix(self.basis, self.quad)

        self._build_edges()
        self._cache: dict = {}

    # -- geometry / boundary plumbing ------------------------------------

    def _build_edges(self):
        k = self.k
        el = self.element
        loop = el.vertex_loop
        pos = {int(v): i for i, v in enumerate(loop)}
        nq = max(2, (2 * k + 3) // 2 + 1)  # exact to degree 2k+2 on edges
        tg, wg = gauss_legendre_01(nq)
        einv = _edge_dof_to_coeff(k)
        edges = []
        perimeter = 0.0
        for i, (eid, sign) in enumerate(zip(el.edge_ids, el.outward_signs)):
            e = self.mesh.edges[eid]
            p0, p1 = self.mesh.vertices[e.v0], self.mesh.vertices[e.v1]
            pts = p0[None, :] + tg[:, None] * (p1 - p0)[None, :]
            cols = [self.layout.vertex_dof(pos[e.v0]), self.layout.vertex_dof(pos[e.v1])]
            cols += [self.layout.edge_dof(i, j) for j in range(k - 1)]
            bvals = np.column_stack([(tg - 0.5) ** b for b in range(k + 1)])
            edges.append(
                _EdgeData(
                    cols=np.array(cols, dtype=int),
                    t=tg,
                    w01=wg,
                    points=pts,
                    length=e.length,
                    normal=sign * e.normal,
                    trace=bvals @ einv,
                )
            )
            perimeter += e.length
        self.edges = edges
        self.perimeter = perimeter

    # -- DOF functionals applied to polynomials ---------------------------

    @property
    def dof_matrix(self) -> np.ndarray:
        """D[i, a] = i-th DOF functional applied to the a-th monomial."""
        if "D" in self._cache:
            return self._cache["D"]
        lay = self.layout
        d = np.zeros((lay.n_scalar, self.nk))
        d[: self.nv] = self.basis.eval(self.coords)
        for i, ed in enumerate(self.edges):
            vals = self.basis.eval(ed.points)  # (nq, nk)
            for j in range(self.k - 1):
                bj = (ed.t - 0.5) ** j
                d[lay.edge_dof(i, j)] = (ed.w01 * bj) @ vals
        if lay.n_cell:
            d[lay.n_vertices + lay.n_edge :] = self.mass[: lay.n_cell] / self.area
        self._cache["D"] = d
        return d

    # -- projectors -------------------------------------------------------

    def elliptic_projector(self) -> tuple[np.ndarray, np.ndarray]:
        """(Pn_star, Pn_dof): the H1 projector onto P_k in polynomial
        coefficients and in DOF coordinates."""
        if "pn" in self._cache:
            return self._cache["pn"]
        nk, lay = self.nk, self.layout
        grads = self.basis.grad(self.quad.points)
        g = np.einsum("qai,qbi,q->ab", grads, grads, self.quad.weights)

        b = np.zeros((nk, lay.n_scalar))
        lap = self.basis.laplacian_matrix()  # (n_{k-2}, nk)
        for gi in range(lap.shape[0]):
            b[:, lay.cell_dof(gi)] -= self.area * lap[gi]
        for ed in self.edges:
            w = ed.length * ed.w01
            mgrad = self.basis.grad(ed.points) @ ed.normal  # (nq, nk)
            b[:, ed.cols] += mgrad.T @ (w[:, None] * ed.trace)
        # constant mode fixed by the boundary average
        g[0] = self._boundary_average_monomials()
        b[0] = self._boundary_average_dofs()
        try:
            pn_star = np.linalg.solve(g, b)
        except np.linalg.LinAlgError:
            raise DegenerateElementError("singular elliptic projector system") from None
        pn_dof = self.dof_matrix @ pn_star
        self._cache["pn"] = (pn_star, pn_dof)
        return pn_star, pn_dof

    def _boundary_average_monomials(self) -> np.ndarray:
        row = np.zeros(self.nk)
        for ed in self.edges:
            row += (ed.length * ed.w01) @ self.basis.eval(ed.points)
        return row / self.perimeter

    def _boundary_average_dofs(self) -> np.ndarray:
        row = np.zeros(self.layout.n_scalar)
        for ed in self.edges:
            row[ed.cols] += (ed.length * ed.w01) @ ed.trace
        return row / self.perimeter

    def l2_projector(self, degree: int, variant: SpaceVariant) -> np.ndarray:
        """Orthogonal projector onto P_degree in polynomial coefficients.

        The regular space computes moments only up to k-2 (from the cell
        DOFs); the enhanced space extends to degree k by borrowing the
        missing moments from the elliptic projection.
        """
        k, lay = self.k, self.layout
        if degree < 0:
            raise ValueError(
                "no orthogonal projector of negative degree; order-1 regular "
                "elements use the vertex-average load rule instead"
            )
        if variant is SpaceVariant.REGULAR and degree > k - 2:
            raise ValueError(f"regular space computes moments only up to degree {k - 2}")
        if degree > k:
            raise ValueError(f"orthogonal projector degree is limited to {k}")
        key = ("p0", degree, variant)
        if key in self._cache:
            return self._cache[key]
        nt = n_poly(degree)
        moments = np.zeros((nt, lay.n_scalar))
        n_direct = min(nt, lay.n_cell)
        for a in range(n_direct):
            moments[a, lay.cell_dof(a)] = self.area
        if n_direct < nt:
            pn_star, _ = self.elliptic_projector()
            borrowed = self.mass[:nt] @ pn_star
            moments[n_direct:] = borrowed[n_direct:]
        p0 = np.linalg.solve(self.mass[:nt, :nt], moments)
        self._cache[key] = p0
        return p0

    def gradient_projector(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient matrices of the orthogonal projection of each partial
        derivative onto P_{k-1}."""
        if "p0grad" in self._cache:
            return self._cache["p0grad"]
        hm = self.mass[: n_poly(self.k - 1), : n_poly(self.k - 1)]
        rx, ry = self.divergence_rows(self.k - 1)
        out = (np.linalg.solve(hm, rx), np.linalg.solve(hm, ry))
        self._cache["p0grad"] = out
        return out

    def divergence_rows(self, degree: int) -> tuple[np.ndarray, np.ndarray]:
        """R_i[a, j] = integral over P of m_a * (d phi_j / d x_i), for
        |a| <= degree <= k-1, computed from boundary traces and cell moments
        by integration by parts."""
        if degree > self.k - 1:
            raise ValueError("divergence moments need degree <= k-1")
        key = ("divrows", degree)
        if key in self._cache:
            return self._cache[key]
        lay = self.layout
        nt = n_poly(degree)
        indices = multi_indices(degree)
        rows = []
        for axis in range(2):
            r = np.zeros((nt, lay.n_scalar))
            for a, (a1, a2) in enumerate(indices):
                ai = (a1, a2)[axis]
                if ai > 0:
                    gamma = (a1 - 1, a2) if axis == 0 else (a1, a2 - 1)
                    r[a, lay.cell_dof(index_of(gamma))] -= (
                        ai / self.diameter
                    ) * self.area
            for ed in self.edges:
                w = ed.length * ed.w01 * ed.normal[axis]
                mvals = self.basis.eval(ed.points)[:, :nt]
                r[:, ed.cols] += mvals.T @ (w[:, None] * ed.trace)
            rows.append(r)
        self._cache[key] = tuple(rows)
        return self._cache[key]

    # -- local matrices ----------------------------------------------------

    def stiffness_scalar(
        self,
        variant: SpaceVariant = SpaceVariant.ENHANCED,
        stab: StabilizationProjector = StabilizationProjector.ELLIPTIC,
        trace_scale: bool = False,
    ) -> tuple[np.ndarray, np.ndarray]:
        key = ("stiff", variant, stab, trace_scale)
        if key in self._cache:
            return self._cache[key]
        nkm1 = n_poly(self.k - 1)
        hm = self.mass[:nkm1, :nkm1]
        rx, ry = self.divergence_rows(self.k - 1)
        a_c = rx.T @ np.linalg.solve(hm, rx) + ry.T @ np.linalg.solve(hm, ry)
        a_c = 0.5 * (a_c + a_c.T)
        if stab is StabilizationProjector.ELLIPTIC:
            _, pi_dof = self.elliptic_projector()
        else:
            p0 = self.l2_projector(self.k, variant)
            pi_dof = self.dof_matrix @ p0
        res = np.eye(self.layout.n_scalar) - pi_dof
        a_s = res.T @ res
        a_s = 0.5 * (a_s + a_s.T)
        if trace_scale:
            a_s = a_s * (np.trace(a_c) / self.layout.n_scalar)
        self._cache[key] = (a_c, a_s)
        return a_c, a_s

    def divergence_matrix(
        self, k_pressure: int, pressure_basis: str = "monomial"
    ) -> np.ndarray:
        """B_P[a, j] = integral of m_a * Pi0 div Phi_j over the element,
        columns over both velocity components."""
        if not 0 <= k_pressure <= self.k - 1:
            raise ValueError("pressure degree must satisfy 0 <= k_p <= k-1")
        rx, ry = self.divergence_rows(k_pressure)
        b = np.hstack([rx, ry])
        if pressure_basis == "orthonormal":
            ob = gram_schmidt(self.coords, k_pressure, self.quad)
            b = ob.coeffs @ b
        elif pressure_basis != "monomial":
            raise ValueError(f"unknown pressure basis {pressure_basis!r}")
        return b

    def load_vector(self, f, variant: SpaceVariant, rhs_degree: int) -> np.ndarray:
        """Load DOF vector for a vector field f, using the orthogonal
        projection of degree `rhs_degree` (or the vertex-average rule for
        order-1 regular elements)."""
        lay = self.layout
        n = lay.n_scalar
        fvals = np.asarray(f(self.quad.points), dtype=float)
        out = np.zeros(2 * n)
        if variant is SpaceVariant.REGULAR and self.k == 1:
            f_int = self.quad.weights @ fvals  # (2,)
            out[: self.nv] = f_int[0] / self.nv
            out[n : n + self.nv] = f_int[1] / self.nv
            return out
        p0 = self.l2_projector(rhs_degree, variant)
        mvals = self.basis.eval(self.quad.points)[:, : n_poly(rhs_degree)]
        mom = mvals.T @ (self.quad.weights[:, None] * fvals)  # (nt, 2)
        out[:n] = p0.T @ mom[:, 0]
        out[n:] = p0.T @ mom[:, 1]
        return out

    def stiffness_vector(self, *args, **kwargs) -> tuple[np.ndarray, np.ndarray]:
        """Block-diagonal duplication of the scalar matrices for the two
        velocity components."""
        a_c, a_s = self.stiffness_scalar(*args, **kwargs)
        z = np.zeros_like(a_c)
        return (
            np.block([[a_c, z], [z, a_c]]),
            np.block([[a_s, z], [z, a_s]]),
        )


# ---------------------------------------------------------------------------
# free-function surface mirroring the operation contracts


def elliptic_projector(mesh: PolygonalMesh, index: int, k: int):
    return ElementOps(mesh, index, k).elliptic_projector()


def l2_projector(mesh: PolygonalMesh, index: int, k: int, variant: SpaceVariant):
    ops = ElementOps(mesh, index, k)
    return ops.l2_projector(k + variant.l2_degree_offset, variant)


def gradient_projector(mesh: PolygonalMesh, index: int, k: int):
    return ElementOps(mesh, index, k).gradient_projector()


def local_stiffness(
    mesh: PolygonalMesh,
    index: int,
    k: int,
    variant: SpaceVariant = SpaceVariant.ENHANCED,
    stab: StabilizationProjector = StabilizationProjector.ELLIPTIC,
    trace_scale: bool = False,
):
    return ElementOps(mesh, index, k).stiffness_vector(variant, stab, trace_scale)


def local_divergence(
    mesh: PolygonalMesh,
    index: int,
    k: int,
    k_pressure: int,
    pressure_basis: str = "monomial",
):
    return ElementOps(mesh, index, k).divergence_matrix(k_pressure, pressure_basis)


def local_load(
    mesh: PolygonalMesh,
    index: int,
    k: int,
    variant: SpaceVariant,
    rhs_degree: int,
    f,
):
    return ElementOps(mesh, index, k).load_vector(f, variant, rhs_degree)
