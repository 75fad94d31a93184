"""Interface-fitted tetrahedral meshes: TetGen I/O, a sphere-interface
generator for desk tests, and a validation report.

Region attribute convention: 1 = protein, 2 = solvent.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    pass


class RegionLabel(IntEnum):
    PROTEIN = 1
    SOLVENT = 2


# faces opposite vertex k of a tet
_FACE_IDX = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def signed_volumes(vertices, tets):
    x = vertices[tets]
    e = x[:, 1:, :] - x[:, :1, :]
    return np.linalg.det(e) / 6.0


def barycentric_gradients(vertices, tets):
    """Gradients of the four P1 hat functions on each tet, shape (T, 4, 3)."""
    x = vertices[tets]
    B = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
    Binv = np.linalg.inv(B)
    grads = np.empty((len(tets), 4, 3))
    grads[:, 1:, :] = Binv
    grads[:, 0, :] = -Binv.sum(axis=1)
    return grads


class TetMesh:
    """Tetrahedral partition of a box into protein and solvent regions.

    Construction repairs negatively oriented tets by swapping two vertices
    (the count is kept in ``n_repaired``) and derives interface triangles and
    boundary vertices from face adjacency.
    """

    def __init__(self, vertices, tets, labels):
        vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
        labels = np.array(labels, dtype=np.int8).reshape(-1)
        if len(labels) != len(tets):
            raise MeshError("one region label per tetrahedron required")
        if len(tets) == 0:
            raise MeshError("mesh has no tetrahedra")
        if tets.min() < 0 or tets.max() >= len(vertices):
            raise MeshFormatError("tetrahedron references a missing vertex")
        bad = ~np.isin(labels, (RegionLabel.PROTEIN, RegionLabel.SOLVENT))
        if bad.any():
            raise MeshFormatError(f"region label {labels[bad][0]} outside {{1, 2}}")

        vol = signed_volumes(vertices, tets)
        flip = vol < 0
        tets[flip] = tets[flip][:, [0, 2, 1, 3]]
        self.n_repaired = int(flip.sum())
        self.volumes = np.abs(vol)

        self.vertices = vertices
        self.tets = tets
        self.labels = labels
        self._derive_faces()
        for a in (self.vertices, self.tets, self.labels, self.volumes,
                  self.interface_tris, self.interface_normals, self.boundary_vertices):
            a.setflags(write=False)

    def _derive_faces(self):
        faces = self.tets[:, _FACE_IDX].reshape(-1, 3)
        keys = np.sort(faces, axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if counts.max() > 2:
            raise MeshError("non-manifold mesh: a face is shared by more than two tets")
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        owner = order // 4

        single = counts == 1
        bfaces = faces[order[starts[single]]]
        self.boundary_faces = bfaces
        self.boundary_vertices = np.unique(bfaces)

        pair = counts == 2
        t0 = owner[starts[pair]]
        t1 = owner[starts[pair] + 1]
        mixed = self.labels[t0] != self.labels[t1]
        t0, t1 = t0[mixed], t1[mixed]
        face_rows = order[starts[pair]][mixed]
        prot = np.where(self.labels[t0] == RegionLabel.PROTEIN, t0, t1)
        solv = np.where(self.labels[t0] == RegionLabel.PROTEIN, t1, t0)
        tris = faces[face_rows].copy()
        x = self.vertices[tris]
        normal = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        towards = self.centroids_of(solv) - self.centroids_of(prot)
        swap = np.einsum("ij,ij->i", normal, towards) < 0
        tris[swap] = tris[swap][:, [0, 2, 1]]
        normal[swap] *= -1
        norm = np.linalg.norm(normal, axis=1)
        self.interface_tris = tris
        self.interface_areas = 0.5 * norm
        self.interface_normals = normal / np.where(norm > 0, norm, 1.0)[:, None]
        self.interface_area_total = float(self.interface_areas.sum())

    def centroids_of(self, tet_ids=None):
        t = self.tets if tet_ids is None else self.tets[tet_ids]
        return self.vertices[t].mean(axis=1)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def region_mask(self, region: Optional[RegionLabel]) -> np.ndarray:
        if region is None:
            return np.ones(self.n_tets, dtype=bool)
        return self.labels == region

    def region_vertices(self, region: RegionLabel) -> np.ndarray:
        return np.unique(self.tets[self.labels == region])

    @property
    def interface_vertices(self) -> np.ndarray:
        return np.unique(self.interface_tris)

    def solvent_only_vertices(self) -> np.ndarray:
        """Vertices touching solvent tets only (off the interface)."""
        return np.setdiff1d(self.region_vertices(RegionLabel.SOLVENT), self.interface_vertices)


# -- TetGen I/O ---------------------------------------------------------------

def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_tetgen(node_text: str, ele_text: str) -> TetMesh:
    """Build a mesh from TetGen .node and .ele file contents."""
    nodes = _data_lines(node_text)
    try:
        lineno, header = next(nodes)
        n_nodes, dim = int(header[0]), int(header[1])
    except (StopIteration, ValueError, IndexError):
        raise MeshFormatError("node file: bad header") from None
    if dim != 3:
        raise MeshFormatError(f"node file line {lineno}: dimension must be 3")
    ids, coords = [], []
    for lineno, f in nodes:
        try:
            ids.append(int(f[0]))
            coords.append([float(f[1]), float(f[2]), float(f[3])])
        except (ValueError, IndexError):
            raise MeshFormatError(f"node file line {lineno}: bad vertex record") from None
    if len(ids) != n_nodes:
        raise MeshFormatError(f"node file: header says {n_nodes} vertices, found {len(ids)}")
    base = ids[0] if ids else 0
    if base not in (0, 1):
        raise MeshFormatError("node file: first index must be 0 or 1")
    vertices = np.zeros((n_nodes, 3))
    for idx, xyz in zip(ids, coords):
        if not 0 <= idx - base < n_nodes:
            raise MeshFormatError(f"node file: vertex index {idx} out of range")
        vertices[idx - base] = xyz

    eles = _data_lines(ele_text)
    try:
        lineno, header = next(eles)
        n_tets, per, n_attr = int(header[0]), int(header[1]), int(header[2])
    except (StopIteration, ValueError, IndexError):
        raise MeshFormatError("ele file: bad header (expected 'M 4 1')") from None
    if per != 4:
        raise MeshFormatError("ele file: only 4-node tetrahedra are supported")
    if n_attr < 1:
        raise MeshFormatError("ele file: a region attribute per tetrahedron is required")
    tets, labels = [], []
    for lineno, f in eles:
        try:
            vs = [int(v) - base for v in f[1:5]]
            attr = float(f[5])
        except (ValueError, IndexError):
            raise MeshFormatError(f"ele file line {lineno}: bad tetrahedron record") from None
        if min(vs) < 0 or max(vs) >= n_nodes:
            raise MeshFormatError(
                f"ele file line {lineno}: vertex index out of range for {n_nodes} vertices"
            )
        if attr not in (1.0, 2.0):
            raise MeshFormatError(f"ele file line {lineno}: region attribute {f[5]} not in {{1, 2}}")
        tets.append(vs)
        labels.append(int(attr))
    if len(tets) != n_tets:
        raise MeshFormatError(f"ele file: header says {n_tets} tetrahedra, found {len(tets)}")
    return TetMesh(vertices, tets, labels)


def read_tetgen(node_path, ele_path) -> TetMesh:
    return load_tetgen(Path(node_path).read_text(), Path(ele_path).read_text())


def format_tetgen(mesh: TetMesh):
    """Return (node_text, ele_text) with 1-based indices and 17-digit coordinates."""
    boundary = np.zeros(mesh.n_vertices, dtype=int)
    boundary[mesh.boundary_vertices] = 1
    node = [f"{mesh.n_vertices} 3 0 1"]
    for i, (x, y, z) in enumerate(mesh.vertices, start=1):
        node.append(f"{i} {x:.17g} {y:.17g} {z:.17g} {boundary[i - 1]}")
    ele = [f"{mesh.n_tets} 4 1"]
    for i, (t, lab) in enumerate(zip(mesh.tets + 1, mesh.labels), start=1):
        ele.append(f"{i} {t[0]} {t[1]} {t[2]} {t[3]} {int(lab)}")
    return "\n".join(node) + "\n", "\n".join(ele) + "\n"


def write_tetgen(mesh: TetMesh, prefix) -> tuple:
    node_text, ele_text = format_tetgen(mesh)
    node_path, ele_path = Path(f"{prefix}.node"), Path(f"{prefix}.ele")
    node_path.write_text(node_text)
    ele_path.write_text(ele_text)
    return node_path, ele_path


# -- synthetic sphere-interface box mesh -------------------------------------

def _kuhn_cells(n):
    """Tets of the Kuhn (6 per cube) decomposition of an n^3 grid."""
    m = n + 1
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
    unit = np.eye(3, dtype=np.int64)
    tets = []
    for perm in itertools.permutations(range(3)):
        corners = [np.zeros(3, dtype=np.int64)]
        for axis in perm:
            corners.append(corners[-1] + unit[axis])
        ids = [((base + c) * [1, m, m * m]).sum(axis=1) for c in corners]
        tets.append(np.stack(ids, axis=1))
    return np.concatenate(tets)


def _warp_to_sphere(vertices, a, b, L):
    """Map the cube shell max|x| = b onto the sphere |x| = a, keeping the box fixed."""
    rho = np.abs(vertices).max(axis=1)
    r = np.linalg.norm(vertices, axis=1)
    scale = np.ones(len(vertices))
    inner = (rho <= b) & (r > 0)
    scale[inner] = a * rho[inner] / (b * r[inner])
    outer = rho > b
    t = (rho[outer] - b) / (L - b)
    scale[outer] = (1 - t) * a / r[outer] + t * 1.0
    return vertices * scale[:, None]


def gen_born_mesh(
    halfwidth: float,
    radius: float,
    n: int,
    snap_fraction: float = 0.3,
    method: str = "warp",
) -> TetMesh:
    """Box mesh of [-L, L]^3 (n divisions per axis, 6 Kuhn tets per cell)
    with a spherical protein region of radius ``radius`` at the origin.

    ``method="warp"`` (default) maps the cube shell of grid cells nearest the
    sphere exactly onto it, so every interface vertex lies on the sphere.
    ``method="snap"`` keeps the uniform grid, projects vertices within
    ``snap_fraction * h`` of the sphere onto it and labels tets by centroid;
    its interface is a staircase.
    """
    L, a = float(halfwidth), float(radius)
    if not 0 < a < L:
        raise MeshError(f"need 0 < radius < halfwidth, got radius={a}, halfwidth={L}")
    if n < 2:
        raise MeshError("need at least 2 divisions")
    if not 0 <= snap_fraction <= 0.5:
        raise MeshError("snap_fraction must lie in [0, 0.5]")
    if method not in ("warp", "snap"):
        raise MeshError(f"unknown method {method!r}")
    h = 2 * L / n
    g = np.linspace(-L, L, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    # x fastest, matching _kuhn_cells numbering
    grid = np.stack([X.T.ravel(), Y.T.ravel(), Z.T.ravel()], axis=1)
    tets = _kuhn_cells(n)

    if method == "warp":
        k = int(np.floor(a / h + 0.5))
        if k < 1:
            raise MeshError("interface empty: sphere radius below half a cell")
        if k >= n // 2:
            raise MeshError("sphere leaves no solvent layer on this grid; use more divisions")
        b = k * h
        vertices = _warp_to_sphere(grid, a, b, L)
        rho_cent = np.abs(grid[tets].mean(axis=1)).max(axis=1)
        labels = np.where(rho_cent < b, RegionLabel.PROTEIN, RegionLabel.SOLVENT)
    else:
        vertices = grid.copy()
        r = np.linalg.norm(vertices, axis=1)
        snap = (np.abs(r - a) < snap_fraction * h) & (r > 0)
        vertices[snap] *= (a / r[snap])[:, None]
        centroid_r = np.linalg.norm(vertices[tets].mean(axis=1), axis=1)
        labels = np.where(centroid_r < a, RegionLabel.PROTEIN, RegionLabel.SOLVENT)

    vol = signed_volumes(vertices, tets)
    if np.abs(vol).min() < 1e-12 * h**3:
        raise MeshError("degenerate tetrahedra after snapping; use a smaller snap_fraction")
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    if not (labels == RegionLabel.PROTEIN).any():
        raise MeshError("interface empty: no tetrahedron lies inside the sphere")
    return TetMesh(vertices, tets, labels)


# -- validation ----------------------------------------------------------------

def _min_dihedral(mesh):
    grads = barycentric_gradients(mesh.vertices, mesh.tets)
    unit = grads / np.linalg.norm(grads, axis=2, keepdims=True)
    best = np.pi
    for k, l in itertools.combinations(range(4), 2):
        cos = -np.einsum("ij,ij->i", unit[:, k], unit[:, l])
        best = min(best, float(np.arccos(np.clip(cos, -1, 1)).min()))
    return np.degrees(best)


@dataclass
class ValidationReport:
    n_vertices: int
    n_vertices_solvent: int
    n_vertices_protein: int
    n_vertices_interface: int
    n_vertices_boundary: int
    n_tets: int
    n_tets_solvent: int
    n_tets_protein: int
    n_interface_tris: int
    min_volume: float
    max_volume: float
    min_dihedral_deg: float
    orientation_repairs: int
    interface_closed: bool
    interface_orientable: bool
    interface_euler: int
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def records(self) -> list:
        return [(k, v) for k, v in self.__dict__.items() if k != "problems"] + [
            ("problems", "; ".join(self.problems) or "none")
        ]

    def to_text(self) -> str:
        head = (
            f"{'':8}|{'Number of vertices':^44}|{'Number of tetrahedra':^26}\n"
            f"{'':8}|{'Omega':>8}{'D_s':>9}{'D_p':>9}{'Gamma':>9}{'dOmega':>9}"
            f"|{'Omega':>8}{'D_s':>9}{'D_p':>9}\n"
            f"{'mesh':8}|{self.n_vertices:>8}{self.n_vertices_solvent:>9}"
            f"{self.n_vertices_protein:>9}{self.n_vertices_interface:>9}"
            f"{self.n_vertices_boundary:>9}|{self.n_tets:>8}{self.n_tets_solvent:>9}"
            f"{self.n_tets_protein:>9}\n"
        )
        body = "\n".join(f"{k} = {v}" for k, v in self.records())
        return head + "\n" + body + "\n"


def validate(mesh: TetMesh) -> ValidationReport:
    tris = mesh.interface_tris
    closed = orientable = False
    euler = 0
    problems = []
    if len(tris):
        directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        undirected = np.sort(directed, axis=1)
        edges, counts = np.unique(undirected, axis=0, return_counts=True)
        closed = bool((counts == 2).all())
        # consistently oriented closed surface: every directed edge appears once
        orientable = closed and len(np.unique(directed, axis=0)) == len(directed)
        euler = len(np.unique(tris)) - len(edges) + len(tris)
    else:
        problems.append("interface empty")
    n_prot = int((mesh.labels == RegionLabel.PROTEIN).sum())
    if n_prot and len(tris) and not closed:
        problems.append("interface surface is not closed")
    return ValidationReport(
        n_vertices=mesh.n_vertices,
        n_vertices_solvent=len(mesh.region_vertices(RegionLabel.SOLVENT)),
        n_vertices_protein=len(mesh.region_vertices(RegionLabel.PROTEIN)),
        n_vertices_interface=len(np.unique(tris)) if len(tris) else 0,
        n_vertices_boundary=len(mesh.boundary_vertices),
        n_tets=mesh.n_tets,
        n_tets_solvent=mesh.n_tets - n_prot,
        n_tets_protein=n_prot,
        n_interface_tris=len(tris),
        min_volume=float(mesh.volumes.min()),
        max_volume=float(mesh.volumes.max()),
        min_dihedral_deg=_min_dihedral(mesh),
        orientation_repairs=mesh.n_repaired,
        interface_closed=closed,
        interface_orientable=orientable,
        interface_euler=int(euler),
        problems=problems,
    )
