"""Linear Lagrange (P1) assembly on a TetMesh.

Stiffness and mass matrices use the exact element formulas. Data-dependent
integrands (loads, weighted masses) are integrated with a tetrahedral
quadrature rule whose points and weights are cached per space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import MeshError, RegionLabel, TetMesh, barycentric_gradients

_PAIR_I, _PAIR_J = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
_LOCAL_MASS = (np.ones((4, 4)) + np.eye(4)) / 20.0


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(nq, d+1)`` and weights summing to the
    reference measure (1/6 for the tet, 1/2 for the triangle)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def reference_measure(self) -> float:
        return 1.0 / 6.0 if self.points.shape[1] == 4 else 0.5


def tet_rule(degree: int = 2) -> QuadratureRule:
    """Positive-weight tetrahedral rule exact for polynomials of ``degree``.

    Degree 1 is the centroid rule, degree 2 the symmetric 4-point rule; higher
    degrees use a collapsed Gauss-Jacobi product.
    """
    if degree < 1:
        raise ValueError("quadrature degree must be at least 1")
    if degree == 1:
        return QuadratureRule(np.full((1, 4), 0.25), np.array([1.0 / 6.0]), 1)
    if degree == 2:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.full((4, 4), b)
        np.fill_diagonal(pts, a)
        return QuadratureRule(pts, np.full(4, 1.0 / 24.0), 2)
    k = (degree + 2) // 2
    # map [-1,1] Gauss-Jacobi nodes to [0,1]; weights carry the (1-t)^a factors
    x0, w0 = roots_jacobi(k, 2, 0)
    x1, w1 = roots_jacobi(k, 1, 0)
    x2, w2 = roots_jacobi(k, 0, 0)
    t0, t1, t2 = (x0 + 1) / 2, (x1 + 1) / 2, (x2 + 1) / 2
    w0, w1, w2 = w0 / 8, w1 / 4, w2 / 2
    pts, wts = [], []
    for i in range(k):
        for j in range(k):
            for m in range(k):
                x = t0[i]
                y = t1[j] * (1 - x)
                z = t2[m] * (1 - x) * (1 - t1[j])
                pts.append([1 - x - y - z, x, y, z])
                wts.append(w0[i] * w1[j] * w2[m])
    return QuadratureRule(np.array(pts), np.array(wts), degree)


def tri_rule() -> QuadratureRule:
    """3-point degree-2 rule on the reference triangle."""
    pts = np.full((3, 3), 1.0 / 6.0)
    np.fill_diagonal(pts, 2.0 / 3.0)
    return QuadratureRule(pts, np.full(3, 1.0 / 6.0), 2)


class P1Space:
    """Continuous piecewise linear functions on ``mesh``.

    ``interior_dofs`` are the vertices off the box boundary (the test space
    with zero Dirichlet data); ``to_interior`` maps vertex ids to interior
    numbering and holds -1 on the boundary.
    """

    def __init__(self, mesh: TetMesh, quad_degree: int = 2):
        self.mesh = mesh
        self.n = mesh.n_vertices
        self.boundary_dofs = np.asarray(mesh.boundary_vertices)
        mask = np.ones(self.n, dtype=bool)
        mask[self.boundary_dofs] = False
        self.interior_mask = mask
        self.interior_dofs = np.flatnonzero(mask)
        self.to_interior = np.full(self.n, -1)
        self.to_interior[self.interior_dofs] = np.arange(len(self.interior_dofs))
        self.grads = barycentric_gradients(mesh.vertices, mesh.tets)
        self.quad = tet_rule(quad_degree)
        # physical weights per tet and point: |T| * w_q / |T_ref|
        self.qweights = np.outer(mesh.volumes, self.quad.weights / self.quad.reference_measure)
        self.qpoints = np.einsum("qk,tkd->tqd", self.quad.points, mesh.vertices[mesh.tets])

    def tets_in(self, region: Optional[RegionLabel]) -> np.ndarray:
        return np.flatnonzero(self.mesh.region_mask(region))

    def _scatter(self, tet_ids, local):
        t = self.mesh.tets[tet_ids]
        rows = t[:, _PAIR_I].ravel()
        cols = t[:, _PAIR_J].ravel()
        A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A

    def values_at_quadrature(self, nodal, tet_ids) -> np.ndarray:
        """P1 interpolant of a nodal field at the quadrature points, shape (T, nq)."""
        return np.asarray(nodal)[self.mesh.tets[tet_ids]] @ self.quad.points.T

    def load_from_values(self, tet_ids, values) -> np.ndarray:
        """Load vector from integrand samples ``values`` of shape (T, nq)."""
        local = (self.qweights[tet_ids] * values) @ self.quad.points
        return np.bincount(self.mesh.tets[tet_ids].ravel(), local.ravel(), minlength=self.n)

    def weighted_mass(self, tet_ids, values) -> sp.csr_matrix:
        """Matrix of the integral of w phi_i phi_j with w sampled as (T, nq)."""
        P = self.quad.points
        local = np.einsum("tq,qi,qj->tij", self.qweights[tet_ids] * values, P, P)
        return self._scatter(tet_ids, local)


def assemble_stiffness(space: P1Space, region: Optional[RegionLabel] = None,
                       coeff: float = 1.0) -> sp.csr_matrix:
    """coeff * integral of grad phi_i . grad phi_j over tets of ``region`` (None = all)."""
    if not np.isfinite(coeff):
        raise ValueError("stiffness coefficient must be finite")
    ids = space.tets_in(region)
    g = space.grads[ids]
    local = coeff * space.mesh.volumes[ids, None, None] * np.einsum("tid,tjd->tij", g, g)
    return space._scatter(ids, local)


def assemble_mass(space: P1Space, region: Optional[RegionLabel] = None) -> sp.csr_matrix:
    ids = space.tets_in(region)
    local = space.mesh.volumes[ids, None, None] * _LOCAL_MASS[None]
    return space._scatter(ids, local)


def assemble_load(space: P1Space, region: Optional[RegionLabel], fn: Callable) -> np.ndarray:
    """Load vector of ``fn`` over ``region``; ``fn`` maps (m, 3) points to (m,)."""
    ids = space.tets_in(region)
    pts = space.qpoints[ids]
    vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float).reshape(pts.shape[:2])
    return space.load_from_values(ids, vals)


def assemble_interface_load(space: P1Space, g_sampler: Callable) -> np.ndarray:
    """Surface load on the interface triangles.

    ``g_sampler(points, normals)`` returns the datum at (m, 3) points with
    the matching unit normals (protein to solvent).
    """
    mesh = space.mesh
    tris = mesh.interface_tris
    if len(tris) == 0:
        raise MeshError("interface empty: surface load undefined")
    rule = tri_rule()
    x = mesh.vertices[tris]
    pts = np.einsum("qk,fkd->fqd", rule.points, x)
    normals = np.repeat(mesh.interface_normals, len(rule.weights), axis=0)
    vals = np.asarray(g_sampler(pts.reshape(-1, 3), normals), dtype=float).reshape(pts.shape[:2])
    w = np.outer(mesh.interface_areas, rule.weights / rule.reference_measure)
    local = (w * vals) @ rule.points
    return np.bincount(tris.ravel(), local.ravel(), minlength=space.n)


@dataclass
class AssembledSystem:
    """Sparse matrix, right side and dof layout ("single" or "blocked")."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: str = "single"
    n_fields: int = 1

    def __post_init__(self):
        if self.matrix.shape != (len(self.rhs), len(self.rhs)):
            raise ValueError("matrix and right side sizes disagree")


def blocked(blocks, rhs_parts) -> AssembledSystem:
    """Two-field system [[A, B], [C, D]] in blocked ordering."""
    A = sp.bmat(blocks, format="csr")
    A.sum_duplicates()
    A.sort_indices()
    return AssembledSystem(A, np.concatenate(rhs_parts), "blocked", len(rhs_parts))


def apply_dirichlet(system: AssembledSystem, dofs, values) -> AssembledSystem:
    """Symmetric elimination of the constrained ``dofs``.

    Their columns move to the right side and their rows become identity rows
    with right side ``values``.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if values.shape != dofs.shape:
        raise ValueError("one boundary value per constrained dof required")
    if not np.all(np.isfinite(values)):
        raise ValueError("boundary values must be finite")
    A = system.matrix.tocsr()
    n = A.shape[0]
    lift = np.zeros(n)
    lift[dofs] = values
    rhs = system.rhs - A @ lift
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    A = (D @ A @ D + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    rhs[dofs] = values
    return AssembledSystem(A, rhs, system.layout, system.n_fields)
