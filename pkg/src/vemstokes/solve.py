"""Direct solution of the saddle-point system and the inf-sup
eigen-diagnostic.

The diagnostic forms the pressure Schur complement S = B A^-1 B^T on the
interior velocity DOFs with an elementwise-orthonormal pressure basis, so
the inf-sup constant is the square root of the smallest nonzero eigenvalue
of S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ReducedSystem, SaddleSystem, apply_dirichlet, assemble
from .local import SpaceVariant
from .mesh import PolygonalMesh
from .poly import gram_schmidt, polygon_quadrature

_DENSE_LIMIT = 2000  # unknowns below which a dense factorization is used
_LSTSQ_LIMIT = 8000  # fall back to least squares below this size
_RESIDUAL_TOL = 1e-9
# eigenvalue threshold separating the kernel of the Schur complement
_KERNEL_TAU = 1e-10
# interior-velocity cap of the dense Schur diagnostic (desk-scale guard)
_SCHUR_LIMIT = 5000


class SingularSystemError(RuntimeError):
    """The saddle system could not be solved to the residual contract."""


@dataclass
class StokesSolution:
    velocity: np.ndarray  # all velocity DOFs, boundary values included
    pressure: np.ndarray  # per-element monomial coefficients (physical sign)
    multiplier: float
    residual: float
    status: str  # "ok" or "singular"


def solve_saddle(reduced: ReducedSystem) -> StokesSolution:
    """Solve the reduced symmetric indefinite system.

    Small systems use a dense factorization; larger ones sparse LU.  If the
    factorization fails or the residual contract is violated (the expected
    behaviour of the unstable order-1 pairs), a dense least-squares solve is
    attempted; an inconsistent system yields status "singular".
    """
    m, rhs = reduced.matrix, reduced.rhs
    n = m.shape[0]
    rhs_norm = np.linalg.norm(rhs)
    x = None
    if n <= _DENSE_LIMIT:
        try:
            x = sla.solve(m.toarray(), rhs, assume_a="sym")
        except (sla.LinAlgError, ValueError):
            x = None
    else:
        try:
            x = spla.splu(m.tocsc()).solve(rhs)
        except RuntimeError:
            x = None
    status = "ok"
    residual = np.inf
    if x is not None and np.all(np.isfinite(x)):
        residual = np.linalg.norm(m @ x - rhs) / max(rhs_norm, 1e-300)
    if residual > _RESIDUAL_TOL:
        if n > _LSTSQ_LIMIT:
            raise SingularSystemError(
                f"factorization failed on {n} unknowns (residual {residual:.2e})"
            )
        x, *_ = np.linalg.lstsq(m.toarray(), rhs, rcond=None)
        residual = np.linalg.norm(m @ x - rhs) / max(rhs_norm, 1e-300)
        if residual > _RESIDUAL_TOL:
            status = "singular"

    system = reduced.system
    nvel = system.dof_map.n_velocity
    n_i = reduced.n_interior
    velocity = np.zeros(nvel)
    velocity[reduced.interior] = x[:n_i]
    velocity[reduced.boundary] = reduced.u_boundary
    # the symmetric arrangement solves for p with A u - B^T p = f
    pressure = x[n_i:-1]
    return StokesSolution(
        velocity=velocity,
        pressure=pressure,
        multiplier=float(x[-1]),
        residual=float(residual),
        status=status,
    )


def solve_stokes(
    mesh: PolygonalMesh,
    k: int,
    k_pressure: int,
    f,
    g,
    variant: SpaceVariant = SpaceVariant.ENHANCED,
    rhs_degree: int | None = None,
) -> tuple[SaddleSystem, StokesSolution]:
    """Assemble, eliminate boundary data, constrain the mean, and solve."""
    system = assemble(mesh, k, k_pressure, variant=variant, rhs_degree=rhs_degree, f=f)
    reduced = apply_dirichlet(system, g)
    return system, solve_saddle(reduced)


@dataclass
class InfSupReport:
    beta: float  # sqrt of the smallest nonzero eigenvalue
    kernel_dim: int
    eigenvalues: np.ndarray  # sorted ascending
    mesh_h: float
    ambiguous_kernel: bool  # kernel size unstable under a 10x threshold move


def infsup_constant(
    mesh: PolygonalMesh,
    k: int,
    k_pressure: int,
    pressure_basis: str = "orthonormal",
) -> InfSupReport:
    """Inf-sup constant beta = sqrt(lambda_min_nonzero(B A^-1 B^T)).

    Boundary velocity rows/columns are removed first.  With the orthonormal
    pressure basis the diagnostic is an ordinary eigenproblem; the monomial
    basis leads to the equivalent generalized problem with the pressure
    mass matrix.
    """
    system = assemble(mesh, k, k_pressure)
    dof_map = system.dof_map
    mask = np.zeros(dof_map.n_velocity, dtype=bool)
    mask[dof_map.boundary_velocity_dofs] = True
    interior = np.where(~mask)[0]
    if len(interior) > _SCHUR_LIMIT:
        raise ValueError(
            f"{len(interior)} interior velocity DOFs exceed the dense "
            f"Schur-complement cap ({_SCHUR_LIMIT})"
        )
    a_ii = system.a[interior][:, interior].tocsc()
    b_i = system.b[:, interior]

    if pressure_basis == "orthonormal":
        b_i = _orthonormalize_pressure_rows(mesh, k_pressure, b_i)
    elif pressure_basis != "monomial":
        raise ValueError(f"unknown pressure basis {pressure_basis!r}")

    lu = spla.splu(a_ii)
    bt = np.asarray(b_i.todense()).T  # (n_i, n_p)
    z = lu.solve(bt)
    s = bt.T @ z
    s = 0.5 * (s + s.T)

    if pressure_basis == "monomial":
        m_p = sla.block_diag(*system.pressure_mass)
        eigs = sla.eigh(s, m_p, eigvals_only=True)
    else:
        eigs = np.linalg.eigvalsh(s)
    eigs = np.sort(np.maximum(eigs, 0.0))

    lam_max = eigs[-1] if len(eigs) else 0.0
    kernel_dim = int(np.sum(eigs < _KERNEL_TAU * lam_max))
    k_lo = int(np.sum(eigs < _KERNEL_TAU * 0.1 * lam_max))
    k_hi = int(np.sum(eigs < _KERNEL_TAU * 10.0 * lam_max))
    nonzero = eigs[kernel_dim:]
    beta = float(np.sqrt(nonzero[0])) if len(nonzero) else 0.0
    return InfSupReport(
        beta=beta,
        kernel_dim=kernel_dim,
        eigenvalues=eigs,
        mesh_h=mesh.h,
        ambiguous_kernel=(k_lo != k_hi),
    )


def _orthonormalize_pressure_rows(mesh, k_pressure, b: sp.csr_matrix) -> sp.csr_matrix:
    """Left-multiply the per-element pressure blocks of B by the
    Gram-Schmidt change of basis, making the pressure mass the identity."""
    from .poly import n_poly

    npp = n_poly(k_pressure)
    blocks = []
    for e in range(mesh.n_elements):
        verts = mesh.element_coords(e)
        ob = gram_schmidt(verts, k_pressure, polygon_quadrature(verts, 2 * k_pressure + 2))
        blocks.append(sp.csr_matrix(ob.coeffs))
    c = sp.block_diag(blocks, format="csr")
    return c @ b
