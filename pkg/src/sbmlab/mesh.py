"""Structured background triangulations and surrogate-domain extraction.

The background mesh covers the domain bounding box with an n x n grid of
cells, each split along the SW-NE diagonal. Restricting it to the triangles
fully contained in the closed domain yields the surrogate mesh on which the
discrete problem lives; its boundary edges carry outward unit normals and
the owning triangle's diameter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import project_points


class MeshError(Exception):
    """Raised for degenerate input, empty surrogate domains or bad moves."""


@dataclass(frozen=True)
class ShiftConfig:
    """Node-shift control: pull boundary vertices until dist <= c_d * h^(1+zeta)."""

    zeta: float
    c_d: float
    enabled: bool = True


@dataclass(frozen=True)
class TriMesh:
    """Triangulation with precomputed surrogate-boundary data.

    vertices        (nv, 2) float
    triangles       (nt, 3) int, counterclockwise
    edge_vertices   (ne, 2) int, boundary edges in owner-cycle orientation
    edge_owner      (ne,) int, owning triangle of each boundary edge
    edge_normal     (ne, 2) outward unit normals
    h_per_triangle  (nt,) triangle diameters
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edge_vertices: np.ndarray
    edge_owner: np.ndarray
    edge_normal: np.ndarray
    h_per_triangle: np.ndarray

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        return _signed_areas(self.vertices, self.triangles)

    def boundary_vertex_ids(self):
        return np.unique(self.edge_vertices)

    def edge_lengths(self):
        ab = (self.vertices[self.edge_vertices[:, 1]]
              - self.vertices[self.edge_vertices[:, 0]])
        return np.hypot(ab[:, 0], ab[:, 1])


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))


def _diameters(vertices, triangles):
    p = vertices[triangles]  # (nt, 3, 2)
    d01 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    d12 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    d20 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    return np.maximum(d01, np.maximum(d12, d20))


def extract_surrogate_boundary(mesh):
    """Boundary-edge records of a mesh: (vertex pairs, owner, normal, h_T).

    Edges come in the owning triangle's cycle orientation, so rotating the
    edge vector clockwise gives the outward normal; h_T is the owning
    triangle's diameter. Raises on non-manifold connectivity.
    """
    ev, eo, en = _boundary_edges(mesh.vertices, mesh.triangles)
    return ev, eo, en, mesh.h_per_triangle[eo]


def _boundary_edges(vertices, triangles):
    nt = triangles.shape[0]
    directed = np.concatenate([triangles[:, [0, 1]],
                               triangles[:, [1, 2]],
                               triangles[:, [2, 0]]], axis=0)
    owner = np.concatenate([np.arange(nt)] * 3)
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True,
                               return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold edge shared by more than two triangles")
    on_boundary = counts[inv] == 1
    edge_vertices = directed[on_boundary]
    edge_owner = owner[on_boundary]
    tangent = vertices[edge_vertices[:, 1]] - vertices[edge_vertices[:, 0]]
    length = np.hypot(tangent[:, 0], tangent[:, 1])
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1) / length[:, None]
    return edge_vertices, edge_owner, normal


def _make_mesh(vertices, triangles):
    ev, eo, en = _boundary_edges(vertices, triangles)
    return TriMesh(vertices=vertices, triangles=triangles, edge_vertices=ev,
                   edge_owner=eo, edge_normal=en,
                   h_per_triangle=_diameters(vertices, triangles))


def build_background(bbox, n):
    """Structured n x n triangulation of a bounding box.

    Parameters
    ----------
    bbox : (xmin, ymin, xmax, ymax)
    n : int
        Subdivisions per axis, at least 2. Every cell is split along the
        same SW-NE diagonal; h_T equals the cell diagonal.
    """
    if n < 2:
        raise MeshError(f"need at least 2 subdivisions per axis, got {n}")
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    if not (xmax > xmin and ymax > ymin):
        raise MeshError(f"degenerate bounding box {bbox}")
    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([gx.ravel(), gy.ravel()], axis=-1)

    idx = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)  # [row=j, col=i]
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.stack([v00, v10, v11], axis=-1)
    upper = np.stack([v00, v11, v01], axis=-1)
    triangles = np.concatenate([lower, upper], axis=1).reshape(-1, 3)
    return _make_mesh(vertices, triangles)


def restrict_to_domain(mesh, domain):
    """Keep the triangles fully contained in the closed domain.

    Containment is tested at seven points per triangle: the vertices, the
    edge midpoints and the centroid. Vertices are renumbered compactly;
    boundary edges and normals are rebuilt.
    """
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    probes = np.concatenate([
        p,
        0.5 * (p + np.roll(p, -1, axis=1)),
        p.mean(axis=1, keepdims=True),
    ], axis=1)  # (nt, 7, 2)
    ok = domain.inside(probes.reshape(-1, 2)).reshape(-1, 7).all(axis=1)
    if not np.any(ok):
        raise MeshError("surrogate domain empty; refine mesh")
    kept = mesh.triangles[ok]
    used = np.unique(kept)
    remap = np.full(mesh.num_vertices, -1, dtype=int)
    remap[used] = np.arange(used.size)
    return _make_mesh(mesh.vertices[used], remap[kept])


def mesh_params(mesh):
    """(h_Gamma, h_Omega): max diameter near the boundary and overall."""
    h_omega = float(mesh.h_per_triangle.max())
    touching = np.isin(mesh.triangles, mesh.boundary_vertex_ids()).any(axis=1)
    h_gamma = float(mesh.h_per_triangle[touching].max())
    return h_gamma, h_omega


# ---------------------------------------------------------------------------
# node shifting toward the true boundary
# ---------------------------------------------------------------------------

_AREA_FLOOR = 0.2
_SHIFT_ROUNDS = 40


def _global_projection(domain, pts):
    """Closest point on the whole boundary: (p, dist) over all sidesets."""
    best_p = None
    best_d = None
    for ss in domain.sidesets:
        _, p, dist = project_points(ss, pts)
        if best_d is None:
            best_p, best_d = p, dist
        else:
            closer = dist < best_d
            best_p = np.where(closer[:, None], p, best_p)
            best_d = np.where(closer, dist, best_d)
    return best_p, best_d


def _incidence_lists(mesh, vertex_ids):
    lists = {int(v): [] for v in vertex_ids}
    for t, tri in enumerate(mesh.triangles):
        for v in tri:
            if int(v) in lists:
                lists[int(v)].append(t)
    return lists


def _damped_move(vertices, triangles, areas0, incident, v, target):
    """Move vertex v toward target, bisecting until incident areas stay
    above the floor; returns the achieved fraction of the move."""
    orig = vertices[v].copy()
    frac = 1.0
    for _ in range(60):
        vertices[v] = orig + frac * (target - orig)
        a = _signed_areas(vertices, triangles[incident])
        if np.all(a >= _AREA_FLOOR * areas0[incident]):
            return frac
        frac *= 0.5
    vertices[v] = orig
    return 0.0


def shift_boundary_nodes(mesh, domain, cfg):
    """Pull surrogate-boundary vertices toward the true boundary.

    Vertices farther from the boundary than c_d * h^(1+zeta) (h = largest
    incident diameter, pre-shift) move along their closest-point direction
    onto that distance. Because straight edges sag away from a curved
    boundary, additional repair rounds pull edge endpoints further until
    every edge quadrature sample satisfies the same bound. Moves are damped
    so each triangle keeps at least 20% of its pre-shift area; if a needed
    move is fully blocked, a MeshError names the vertex.
    """
    if not cfg.enabled:
        return mesh
    if not 0.0 <= cfg.zeta <= 1.0:
        raise MeshError(f"zeta must be in [0, 1], got {cfg.zeta}")
    vertices = mesh.vertices.copy()
    triangles = mesh.triangles
    areas0 = _signed_areas(vertices, triangles)
    bverts = mesh.boundary_vertex_ids()
    incident = _incidence_lists(mesh, bverts)

    # edge samples: endpoints, uniform fill and the Gauss nodes later used
    # by the boundary quadrature, so the post-check cannot see worse points
    gauss = 0.5 * (np.polynomial.legendre.leggauss(3)[0] + 1.0)
    taus = np.unique(np.concatenate([np.linspace(0.0, 1.0, 7), gauss]))

    def edge_excess():
        # diameters shrink when neighboring vertices converge on the
        # boundary, so the bound follows the current geometry
        h_cur = _diameters(vertices, triangles)
        bound = cfg.c_d * h_cur[mesh.edge_owner] ** (1.0 + cfg.zeta)
        a = vertices[mesh.edge_vertices[:, 0]]
        b = vertices[mesh.edge_vertices[:, 1]]
        samples = a[:, None, :] + taus[None, :, None] * (b - a)[:, None, :]
        _, dist = _global_projection(domain, samples.reshape(-1, 2))
        return dist.reshape(len(a), taus.size).max(axis=1) - bound

    blocked = set()
    for round_ in range(_SHIFT_ROUNDS):
        excess = edge_excess()
        if round_ > 0 and np.all(excess <= 1e-11):
            break

        pull = {int(v): 0.0 for v in bverts}
        if round_ == 0:
            # first pass: move each vertex onto its own distance bound
            h_cur = _diameters(vertices, triangles)
            vp = vertices[bverts]
            proj, vdist = _global_projection(domain, vp)
            for k, v in enumerate((int(b) for b in bverts)):
                h_v = h_cur[incident[v]].max()
                over = vdist[k] - cfg.c_d * h_v ** (1.0 + cfg.zeta)
                if over > 0.0:
                    pull[v] = max(pull[v], over)
        for e in np.nonzero(excess > 1e-11)[0]:
            for v in mesh.edge_vertices[e]:
                pull[int(v)] = max(pull[int(v)], float(excess[e]))
        if all(p <= 0.0 for p in pull.values()):
            break

        moved = False
        for v in sorted(pull):
            amount = pull[v]
            if amount <= 0.0:
                continue
            proj, vdist = _global_projection(domain, vertices[v][None, :])
            if vdist[0] <= 1e-15:
                continue
            direction = (proj[0] - vertices[v]) / vdist[0]
            step = min(amount, float(vdist[0]))
            frac = _damped_move(vertices, triangles, areas0, incident[v], v,
                                vertices[v] + step * direction)
            if frac == 0.0:
                blocked.add(v)
            else:
                moved = True
        if not moved:
            break

    excess = edge_excess()
    if np.any(excess > 1e-9):
        e = int(np.argmax(excess))
        culprit = int(mesh.edge_vertices[e, 0])
        if blocked:
            culprit = sorted(blocked)[0]
        raise MeshError(
            f"cannot satisfy distance bound near vertex {culprit} "
            f"(excess {float(excess.max()):.3e}) without violating the area floor")

    ev, eo, en = _boundary_edges(vertices, triangles)
    return replace(mesh, vertices=vertices, edge_vertices=ev, edge_owner=eo,
                   edge_normal=en,
                   h_per_triangle=_diameters(vertices, triangles))


# ---------------------------------------------------------------------------
# VTK legacy ASCII export
# ---------------------------------------------------------------------------

def write_vtk(path, mesh, point_data=None):
    """Write the mesh and nodal scalar fields as legacy ASCII VTK."""
    nv, nt = mesh.num_vertices, mesh.num_triangles
    lines = [
        "# vtk DataFile Version 3.0",
        "surrogate mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.15e} {y:.15e} 0.0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (nv,):
                raise MeshError(f"field {name!r} is not a nodal scalar")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.15e}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
