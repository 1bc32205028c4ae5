"""Global degree-of-freedom numbering, saddle-point assembly, Dirichlet
elimination, and the zero-mean pressure constraint.

Velocity scalar DOFs are numbered vertices first, then edge moments
((k-1) per edge), then cell moments; the y-component block follows the
x-component block.  Pressure DOFs are per-element monomial coefficients
(discontinuous).  The assembled divergence matrix B carries the entries
integral of m_a * Pi0 div Phi_j, matching the local matrices.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .local import ElementOps, SpaceVariant, StabilizationProjector
from .mesh import PolygonalMesh
from .poly import edge_quadrature, gauss_legendre_01, n_poly

# quadrature degree of the Dirichlet edge moments; generous so that the
# discrete divergence of the solution is limited by the solver, not by the
# boundary-data integration
_BC_MIN_DEGREE = 20


@dataclass(frozen=True)
class GlobalDofMap:
    k: int
    k_pressure: int
    n_vertices: int
    n_edges: int
    n_elements: int
    element_scalar_dofs: list[np.ndarray]  # per element, local -> global scalar ids
    boundary_scalar_dofs: np.ndarray  # sorted global scalar ids on the boundary

    @property
    def n_scalar(self) -> int:
        return (
            self.n_vertices
            + (self.k - 1) * self.n_edges
            + n_poly(self.k - 2) * self.n_elements
        )

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_pressure_per_element(self) -> int:
        return n_poly(self.k_pressure)

    @property
    def n_pressure(self) -> int:
        return self.n_pressure_per_element * self.n_elements

    def velocity_dofs(self, element: int) -> np.ndarray:
        """Global velocity DOF ids of an element, x block then y block."""
        scalar = self.element_scalar_dofs[element]
        return np.concatenate([scalar, scalar + self.n_scalar])

    def pressure_dofs(self, element: int) -> np.ndarray:
        npp = self.n_pressure_per_element
        return np.arange(element * npp, (element + 1) * npp)

    @property
    def boundary_velocity_dofs(self) -> np.ndarray:
        b = self.boundary_scalar_dofs
        return np.concatenate([b, b + self.n_scalar])


def build_dof_map(mesh: PolygonalMesh, k: int, k_pressure: int) -> GlobalDofMap:
    if k < 1 or not 0 <= k_pressure <= k - 1:
        raise ValueError("need k >= 1 and 0 <= k_pressure <= k-1")
    nv, ne = mesh.n_vertices, mesh.n_edges
    n_cell = n_poly(k - 2)
    cell_base = nv + ne * (k - 1)
    element_dofs = []
    for e, el in enumerate(mesh.elements):
        ids = [int(v) for v in el.vertex_loop]
        for i, eid in enumerate(el.edge_ids):
            ids.extend(nv + int(eid) * (k - 1) + j for j in range(k - 1))
        ids.extend(cell_base + e * n_cell + g for g in range(n_cell))
        element_dofs.append(np.array(ids, dtype=int))

    boundary = set()
    for eid, edge in enumerate(mesh.edges):
        if edge.on_boundary:
            boundary.add(edge.v0)
            boundary.add(edge.v1)
            boundary.update(nv + eid * (k - 1) + j for j in range(k - 1))
    return GlobalDofMap(
        k=k,
        k_pressure=k_pressure,
        n_vertices=nv,
        n_edges=ne,
        n_elements=mesh.n_elements,
        element_scalar_dofs=element_dofs,
        boundary_scalar_dofs=np.array(sorted(boundary), dtype=int),
    )


@dataclass
class SaddleSystem:
    mesh: PolygonalMesh
    dof_map: GlobalDofMap
    k: int
    k_pressure: int
    variant: SpaceVariant
    rhs_degree: int
    a: sp.csr_matrix  # velocity stiffness (consistency + stabilization)
    b: sp.csr_matrix  # divergence moments, pressure x velocity
    f: np.ndarray  # load
    mean_row: np.ndarray  # per-pressure-DOF integrals of the basis
    pressure_mass: list[np.ndarray] = field(repr=False, default=None)


def assemble(
    mesh: PolygonalMesh,
    k: int,
    k_pressure: int,
    variant: SpaceVariant = SpaceVariant.ENHANCED,
    rhs_degree: int | None = None,
    f=None,
    stab: StabilizationProjector = StabilizationProjector.ELLIPTIC,
    trace_scale: bool = False,
) -> SaddleSystem:
    """Assemble the global Stokes saddle system on `mesh`.

    `rhs_degree` defaults to the variant's natural choice (k for the
    enhanced space, max(0, k-2) for the regular one).  `f` maps (n, 2)
    points to (n, 2) values; omit it for a zero load.
    """
    if rhs_degree is None:
        rhs_degree = k if variant is SpaceVariant.ENHANCED else max(0, k - 2)
    dof_map = build_dof_map(mesh, k, k_pressure)
    if f is None:
        f = lambda pts: np.zeros_like(pts)

    def element_blocks(e: int):
        ops = ElementOps(mesh, e, k)
        a_c, a_s = ops.stiffness_vector(variant, stab, trace_scale)
        b_loc = ops.divergence_matrix(k_pressure)
        f_loc = ops.load_vector(f, variant, rhs_degree)
        npp = dof_map.n_pressure_per_element
        mean_loc = ops.mass[0, :npp]
        mass_loc = ops.mass[:npp, :npp]
        return a_c + a_s, b_loc, f_loc, mean_loc, mass_loc

    n_threads = int(os.environ.get("VEMSTOKES_THREADS", "1"))
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            blocks = list(pool.map(element_blocks, range(mesh.n_elements)))
    else:
        blocks = [element_blocks(e) for e in range(mesh.n_elements)]

    nvel, npre = dof_map.n_velocity, dof_map.n_pressure
    fvec = np.zeros(nvel)
    mean_row = np.zeros(npre)
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    pressure_mass = []
    for e, (a_loc, b_loc, f_loc, mean_loc, mass_loc) in enumerate(blocks):
        vdofs = dof_map.velocity_dofs(e)
        pdofs = dof_map.pressure_dofs(e)
        iv, jv = np.meshgrid(vdofs, vdofs, indexing="ij")
        rows_a.append(iv.ravel())
        cols_a.append(jv.ravel())
        vals_a.append(a_loc.ravel())
        ip, jp = np.meshgrid(pdofs, vdofs, indexing="ij")
        rows_b.append(ip.ravel())
        cols_b.append(jp.ravel())
        vals_b.append(b_loc.ravel())
        fvec[vdofs] += f_loc
        mean_row[pdofs] = mean_loc
        pressure_mass.append(mass_loc)

    a = sp.csr_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(nvel, nvel),
    )
    b = sp.csr_matrix(
        (np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
        shape=(npre, nvel),
    )
    return SaddleSystem(
        mesh=mesh,
        dof_map=dof_map,
        k=k,
        k_pressure=k_pressure,
        variant=variant,
        rhs_degree=rhs_degree,
        a=a,
        b=b,
        f=fvec,
        mean_row=mean_row,
        pressure_mass=pressure_mass,
    )


def boundary_values(mesh: PolygonalMesh, dof_map: GlobalDofMap, g) -> np.ndarray:
    """Velocity boundary DOF values interpolating the trace function `g`.

    Vertex DOFs take point values; boundary edge moments are integrated
    with a high-order Gauss rule.
    """
    k = dof_map.k
    nv = dof_map.n_vertices
    ns = dof_map.n_scalar
    scalar_vals = np.zeros((dof_map.n_scalar, 2))
    on_vertex = np.zeros(nv, dtype=bool)
    degree = max(2 * k + 2, _BC_MIN_DEGREE)
    nq = (degree + 2) // 2
    tg, wg = gauss_legendre_01(nq)
    for eid, edge in enumerate(mesh.edges):
        if not edge.on_boundary:
            continue
        on_vertex[edge.v0] = on_vertex[edge.v1] = True
        p0, p1 = mesh.vertices[edge.v0], mesh.vertices[edge.v1]
        pts = p0[None, :] + tg[:, None] * (p1 - p0)[None, :]
        gvals = np.asarray(g(pts), dtype=float)
        for j in range(k - 1):
            bj = (tg - 0.5) ** j
            scalar_vals[nv + eid * (k - 1) + j] = (wg * bj) @ gvals
    idx = np.where(on_vertex)[0]
    if len(idx):
        scalar_vals[idx] = np.asarray(g(mesh.vertices[idx]), dtype=float)
    values = np.zeros(2 * ns)
    bdofs = dof_map.boundary_scalar_dofs
    values[bdofs] = scalar_vals[bdofs, 0]
    values[bdofs + ns] = scalar_vals[bdofs, 1]
    return values


@dataclass
class ReducedSystem:
    """Saddle system after Dirichlet elimination, with the zero-mean
    pressure constraint appended as a Lagrange multiplier."""

    system: SaddleSystem
    interior: np.ndarray  # interior velocity dof ids
    boundary: np.ndarray  # boundary velocity dof ids
    u_boundary: np.ndarray  # prescribed values on the boundary dofs
    matrix: sp.csc_matrix  # [[A_II, -B_I^T, 0], [-B_I, 0, w], [0, w^T, 0]]
    rhs: np.ndarray

    @property
    def n_interior(self) -> int:
        return len(self.interior)


def apply_dirichlet(system: SaddleSystem, g) -> ReducedSystem:
    """Eliminate the Dirichlet velocity DOFs and append the zero-mean row.

    The reduced matrix stays symmetric; the recovered pressure is the
    physical one (the weak form reads A u - B^T p = f).
    """
    dof_map = system.dof_map
    all_b = dof_map.boundary_velocity_dofs
    mask = np.zeros(dof_map.n_velocity, dtype=bool)
    mask[all_b] = True
    interior = np.where(~mask)[0]
    u_b = boundary_values(system.mesh, dof_map, g)[all_b]

    a_ii = system.a[interior][:, interior]
    a_ib = system.a[interior][:, all_b]
    b_i = system.b[:, interior]
    b_b = system.b[:, all_b]

    f_i = system.f[interior] - a_ib @ u_b
    g_p = b_b @ u_b

    n_i, n_p = len(interior), dof_map.n_pressure
    w = sp.csr_matrix(system.mean_row.reshape(-1, 1))
    matrix = sp.bmat(
        [
            [a_ii, -b_i.T, None],
            [-b_i, None, w],
            [None, w.T, None],
        ],
        format="csc",
    )
    rhs = np.concatenate([f_i, g_p, [0.0]])
    return ReducedSystem(
        system=system,
        interior=interior,
        boundary=all_b,
        u_boundary=u_b,
        matrix=matrix,
        rhs=rhs,
    )


def zero_mean_constraint(system: SaddleSystem) -> np.ndarray:
    """The constraint weights: w[a] = integral of the a-th pressure basis
    function; summing w . p over the mesh gives the mean of p_h."""
    return system.mean_row.copy()


def dump_system(directory, system: SaddleSystem) -> None:
    """Write A, B, f in Matrix Market form for external verification."""
    import pathlib

    from scipy.io import mmwrite

    d = pathlib.Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mmwrite(d / "A.mtx", system.a)
    mmwrite(d / "B.mtx", system.b)
    mmwrite(d / "f.mtx", system.f.reshape(-1, 1))
