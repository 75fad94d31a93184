"""Post-processing: ion concentrations, VTK output, cross-mesh interpolation
and the average-error metric."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .fem import P1Space, assemble_mass
from .mesh import TetMesh, barycentric_gradients
from .model import SolventModel

VTK_TETRA = 10


def concentrations(u, solvent: SolventModel, tau: float = 40.0) -> np.ndarray:
    """Size-modified concentrations c_i(u) in mol/L, shape (len(u), n_species).

    c_i = c_i^b e^{-Z_i u} / (1 + gamma v_bar^2/v0 sum_j c_j^b e^{-Z_j u}),
    with every exponent capped above at ``tau``.
    """
    u = np.asarray(u, dtype=float)
    z = np.asarray(solvent.charges)
    cb = np.asarray(solvent.bulk)
    e = cb[None, :] * np.exp(np.minimum(-np.outer(u, z), tau))
    denom = 1.0 + solvent.size_factor * e.sum(axis=1)
    return e / denom[:, None]


def solvent_concentrations(solution, tau: float = 40.0) -> dict:
    """Per-species nodal fields, NaN off the solvent-only vertices."""
    mesh = solution.mesh
    sv = mesh.solvent_only_vertices()
    c = concentrations(solution.u[sv], solution.problem.solvent, tau)
    out = {}
    for i in range(c.shape[1]):
        f = np.full(mesh.n_vertices, np.nan)
        f[sv] = c[:, i]
        out[f"c{i + 1}"] = f
    return out


# -- VTK ------------------------------------------------------------------------

def _fmt(x) -> str:
    return "nan" if np.isnan(x) else f"{x:.17g}"


def format_vtk(mesh: TetMesh, fields: dict, title: str = "nsmpb solution") -> str:
    """Legacy ASCII unstructured grid with region labels and nodal scalars."""
    n = mesh.n_vertices
    for name, values in fields.items():
        if np.shape(values) != (n,):
            raise ValueError(f"field {name!r} has {np.size(values)} values, mesh has {n} vertices")
        if " " in name:
            raise ValueError(f"field name {name!r} contains a space")
    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {n} double\n")
    for p in mesh.vertices:
        out.write(" ".join(_fmt(x) for x in p) + "\n")
    nt = mesh.n_tets
    out.write(f"CELLS {nt} {5 * nt}\n")
    for t in mesh.tets:
        out.write("4 " + " ".join(str(int(i)) for i in t) + "\n")
    out.write(f"CELL_TYPES {nt}\n")
    out.write(f"{VTK_TETRA}\n" * nt)
    out.write(f"CELL_DATA {nt}\nSCALARS region int 1\nLOOKUP_TABLE default\n")
    out.write("\n".join(str(int(l)) for l in mesh.labels) + "\n")
    if fields:
        out.write(f"POINT_DATA {n}\n")
        for name, values in fields.items():
            out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            out.write("\n".join(_fmt(v) for v in np.asarray(values, dtype=float)) + "\n")
    return out.getvalue()


def write_vtk(mesh: TetMesh, fields: dict, path) -> Path:
    path = Path(path)
    text = format_vtk(mesh, fields)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def read_vtk(text: str):
    """Minimal reader for files written by ``format_vtk``.

    Returns ``(points, cells, cell_data, point_data)``.
    """
    tokens = text.split("\n")
    i = 0
    points = cells = None
    cell_data, point_data = {}, {}
    section = None
    while i < len(tokens):
        line = tokens[i].strip()
        i += 1
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            points = np.array([[float(x) for x in tokens[i + k].split()] for k in range(n)])
            i += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            cells = np.array([[int(x) for x in tokens[i + k].split()[1:]] for k in range(n)])
            i += n
        elif line.startswith("CELL_DATA"):
            section, count = cell_data, int(line.split()[1])
        elif line.startswith("POINT_DATA"):
            section, count = point_data, int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            i += 1  # LOOKUP_TABLE
            section[name] = np.array([float(tokens[i + k]) for k in range(count)])
            i += count
    return points, cells, cell_data, point_data


# -- interpolation --------------------------------------------------------------

class PointLocator:
    """Uniform hash grid over tet bounding boxes for point-in-tet queries."""

    def __init__(self, mesh: TetMesh, cells_per_axis=None):
        self.mesh = mesh
        x = mesh.vertices[mesh.tets]
        lo, hi = mesh.box
        self.lo = lo
        m = cells_per_axis or max(1, int(round(mesh.n_tets ** (1 / 3) / 2)))
        self.m = m
        self.width = np.maximum((hi - lo) / m, 1e-300)
        tmin = self._cell(x.min(axis=1))
        tmax = self._cell(x.max(axis=1))
        buckets = {}
        for t in range(mesh.n_tets):
            for i in range(tmin[t, 0], tmax[t, 0] + 1):
                for j in range(tmin[t, 1], tmax[t, 1] + 1):
                    for k in range(tmin[t, 2], tmax[t, 2] + 1):
                        buckets.setdefault((i, j, k), []).append(t)
        self.buckets = {key: np.array(v) for key, v in buckets.items()}
        self.grads = barycentric_gradients(mesh.vertices, mesh.tets)
        self.origin = mesh.vertices[mesh.tets[:, 0]]

    def _cell(self, p):
        c = np.floor((p - self.lo) / self.width).astype(int)
        return np.clip(c, 0, self.m - 1)

    def barycentric(self, tets, p):
        d = p - self.origin[tets]
        lam = np.einsum("tkd,td->tk", self.grads[tets][:, 1:, :], d)
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def locate(self, p, tol=1e-10):
        """(tet, barycentric coords, inside flag) for one point."""
        key = tuple(self._cell(p[None])[0])
        cand = self.buckets.get(key)
        best_t, best_b, best_min = -1, None, -np.inf
        if cand is not None and len(cand):
            b = self.barycentric(cand, np.broadcast_to(p, (len(cand), 3)))
            mins = b.min(axis=1)
            k = int(np.argmax(mins))
            best_t, best_b, best_min = int(cand[k]), b[k], mins[k]
        if best_min >= -tol:
            return best_t, best_b, True
        # outside every candidate: nearest tet by centroid, extrapolate
        cent = self.mesh.vertices[self.mesh.tets].mean(axis=1)
        t = int(np.argmin(((cent - p) ** 2).sum(axis=1)))
        return t, self.barycentric(np.array([t]), p[None])[0], False


def interpolate(mesh: TetMesh, values, points, locator=None):
    """P1 interpolant of nodal ``values`` at ``points``.

    Returns ``(samples, extrapolated)`` where the boolean flag marks points
    found in no tetrahedron (evaluated by barycentric extrapolation).
    """
    values = np.asarray(values, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loc = locator or PointLocator(mesh)
    out = np.empty(len(pts))
    flag = np.zeros(len(pts), dtype=bool)
    for i, p in enumerate(pts):
        t, b, inside = loc.locate(p)
        out[i] = b @ values[mesh.tets[t]]
        flag[i] = not inside
    return out, flag


def average_error(mesh_coarse: TetMesh, u_coarse, mesh_ref: TetMesh, u_ref) -> float:
    """||I_ref u_coarse - u_ref||_{L2} / N_coarse.

    ``u_coarse`` is interpolated to the reference vertices, the L2 norm uses
    the reference mass matrix and the result is divided by the vertex count
    of the coarse mesh.
    """
    lo_c, hi_c = mesh_coarse.box
    lo_r, hi_r = mesh_ref.box
    if np.any(hi_c < lo_r) or np.any(hi_r < lo_c):
        raise ValueError("meshes cover disjoint domains")
    samples, _ = interpolate(mesh_coarse, u_coarse, mesh_ref.vertices)
    diff = samples - np.asarray(u_ref, dtype=float)
    M = assemble_mass(P1Space(mesh_ref))
    return float(np.sqrt(max(diff @ (M @ diff), 0.0))) / mesh_coarse.n_vertices


# -- trace export ---------------------------------------------------------------

TRACE_COLUMNS = ("iteration", "abs_residual", "rel_residual", "difference", "omega",
                 "halvings", "krylov_iterations", "selection")


def trace_csv(trace) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerow([0, f"{trace.initial_residual:.17g}", "1", "", "", "", "", trace.selection or ""])
    for s in trace.steps:
        w.writerow([s.iteration, f"{s.residual:.17g}", f"{s.relative:.17g}",
                    f"{s.difference:.17g}", f"{s.omega:g}", s.halvings,
                    s.krylov_iterations, s.selection])
    return out.getvalue()
