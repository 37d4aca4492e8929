"""Active/ghost classification and the surrogate boundary of the embedded shape.

An element is active when it does not meet the open hole. The surrogate
boundary is the set of mesh edges shared by one active and one inactive
element; every surrogate edge carries its outward normal (active side), the
element altitude over the edge and Gauss points with closest-point frames.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .geometry import BoundaryFrame, Frames
from .mesh import BackgroundMesh

__all__ = [
    "GeometryError",
    "SurrogateEdge",
    "SurrogateMap",
    "classify",
    "edge_quadrature",
    "orthogonal_length",
    "gauss_legendre",
]


class GeometryError(RuntimeError):
    """The embedded shape is not resolved by the background mesh."""


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss points on ``[0, 1]`` (as segment fractions) and weights summing to 1.

    The returned arrays are cached and read-only.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"edge quadrature order must be 1, 2 or 3, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    s, w = 0.5 * (x + 1.0), 0.5 * w
    s.flags.writeable = False
    w.flags.writeable = False
    return s, w


def orthogonal_length(edge_length, owner_area):
    """Altitude of the owner triangle over the edge, ``2 |K| / |e|``."""
    return 2.0 * np.asarray(owner_area) / np.asarray(edge_length)


def edge_quadrature(a, b, shape, mu: float, order: int = 3):
    """Gauss points on segment ``a -> b`` with their closest-point frames.

    Returns a list of ``(position, weight, BoundaryFrame)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s, w = gauss_legendre(order)
    pts = a + s[:, None] * (b - a)
    weights = w * np.hypot(*(b - a))
    frames = shape.at(mu).frames(pts)
    return [(pts[q], float(weights[q]), frames[q]) for q in range(order)]


@dataclass(frozen=True)
class SurrogateEdge:
    nodes: tuple[int, int]
    owner: int
    normal: np.ndarray
    length: float
    h_perp: float
    quadrature: list


@dataclass(frozen=True, eq=False)
class SurrogateMap:
    """Classification of the background mesh for one parameter value.

    Edge data are stored as arrays; ``edge_nodes[k]`` is ordered so that the
    owner element lies to its left. Quadrature arrays have shape
    ``(n_edges, order)`` or ``(n_edges, order, 2)``.
    """

    mu: float
    active: np.ndarray
    ghost_nodes: np.ndarray
    outer_dirichlet_nodes: np.ndarray
    edge_nodes: np.ndarray
    edge_owner: np.ndarray
    edge_normal: np.ndarray
    edge_length: np.ndarray
    edge_h_perp: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    quad_x: np.ndarray
    quad_d: np.ndarray
    quad_n: np.ndarray
    quad_tau: np.ndarray

    @property
    def active_elements(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    @property
    def n_edges(self) -> int:
        return self.edge_nodes.shape[0]

    @cached_property
    def quad_distance(self) -> np.ndarray:
        return np.hypot(self.quad_d[..., 0], self.quad_d[..., 1])

    @cached_property
    def n_dot_ntilde(self) -> np.ndarray:
        return np.einsum("eqj,ej->eq", self.quad_n, self.edge_normal)

    @cached_property
    def surrogate_nodes(self) -> np.ndarray:
        return np.unique(self.edge_nodes)

    @property
    def edges(self) -> list[SurrogateEdge]:
        out = []
        for k in range(self.n_edges):
            quad = [
                (
                    self.quad_points[k, q],
                    float(self.quad_weights[k, q]),
                    BoundaryFrame(self.quad_x[k, q], self.quad_d[k, q], self.quad_n[k, q], self.quad_tau[k, q]),
                )
                for q in range(self.quad_weights.shape[1])
            ]
            out.append(
                SurrogateEdge(
                    nodes=(int(self.edge_nodes[k, 0]), int(self.edge_nodes[k, 1])),
                    owner=int(self.edge_owner[k]),
                    normal=self.edge_normal[k],
                    length=float(self.edge_length[k]),
                    h_perp=float(self.edge_h_perp[k]),
                    quadrature=quad,
                )
            )
        return out

    def write_csv(self, path, mesh: BackgroundMesh) -> None:
        """Dump per-edge diagnostics (endpoints, normal, mean |d|, h_perp)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["edge", "x0", "y0", "x1", "y1", "nx", "ny", "mean_d", "h_perp"])
            dmean = self.quad_distance.mean(axis=1)
            for k in range(self.n_edges):
                p, q = mesh.nodes[self.edge_nodes[k]]
                vals = (p[0], p[1], q[0], q[1], *self.edge_normal[k], dmean[k], self.edge_h_perp[k])
                w.writerow([k, *(repr(float(v)) for v in vals)])


def _check_clearance(mesh: BackgroundMesh, prim) -> None:
    x0, x1, y0, y1 = prim.bounds
    box = mesh.box
    gap = mesh.h_realized
    if x0 - gap <= box.xmin or x1 + gap >= box.xmax or y0 - gap <= box.ymin or y1 + gap >= box.ymax:
        raise GeometryError(
            f"embedded shape {prim} needs at least one element layer of clearance inside {box}"
        )


def classify(mesh: BackgroundMesh, shape, mu: float, order: int = 3, check: bool = True) -> SurrogateMap:
    """Split the background mesh into active and ghost parts for ``mu``.

    Raises
    ------
    GeometryError
        If the shape comes too close to the outer wall, if no mesh node
        falls strictly inside the shape (the hole is not resolved), if
        nothing is active, or if the minimal resolution
        condition ``n . n_tilde >= 0`` fails on some surrogate edge.
    """
    prim = shape.at(mu)
    _check_clearance(mesh, prim)
    cand = mesh.elements_in_box(*prim.bounds)
    tri = mesh.coords[cand]
    if not prim.contains(tri.reshape(-1, 2)).any():
        raise GeometryError(f"unresolved geometry at mu={mu}: no mesh node lies inside the shape")

    active = np.ones(mesh.n_elements, dtype=bool)
    active[cand] = ~prim.intersects_triangles(tri)
    if not active.any():
        raise GeometryError(f"no active element at mu={mu}")
    inactive = np.flatnonzero(~active)

    # a node is ghost when every element around it is inactive
    hits = np.bincount(mesh.elements[inactive].ravel(), minlength=mesh.n_nodes)
    ghost_nodes = np.flatnonzero((hits > 0) & (hits == mesh.node_valence))

    # interface edges are among the edges of inactive elements
    mark = np.zeros(mesh.edges.shape[0], dtype=bool)
    mark[mesh.element_edges[inactive]] = True
    eids = np.flatnonzero(mark)
    ee = mesh.edge_elements[eids]
    interior = ee[:, 1] >= 0
    a0 = active[ee[:, 0]]
    a1 = np.where(interior, active[np.maximum(ee[:, 1], 0)], False)
    cut = interior & (a0 != a1)
    if not cut.any():
        raise GeometryError(f"unresolved geometry at mu={mu}: empty surrogate boundary")
    owner = np.where(a0, ee[:, 0], ee[:, 1])[cut]
    if mesh.wall_elements[inactive].any() or mesh.wall_elements[owner].any():
        raise GeometryError(
            f"embedded shape {prim} at mu={mu} reaches the elements touching the outer wall; "
            "it needs more clearance inside the box"
        )
    ends = mesh.edges[eids[cut]]

    # orient each edge counterclockwise with respect to its owner
    el = mesh.elements[owner]
    pos0 = np.argmax(el == ends[:, [0]], axis=1)
    pos1 = np.argmax(el == ends[:, [1]], axis=1)
    ccw = (pos1 - pos0) % 3 == 1
    edge_nodes = np.where(ccw[:, None], ends, ends[:, ::-1])

    p = mesh.nodes[edge_nodes[:, 0]]
    q = mesh.nodes[edge_nodes[:, 1]]
    t = q - p
    length = np.hypot(t[:, 0], t[:, 1])
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    h_perp = orthogonal_length(length, mesh.areas[owner])

    s, w = gauss_legendre(order)
    pts = p[:, None, :] + s[None, :, None] * t[:, None, :]
    weights = w[None, :] * length[:, None]
    fr: Frames = prim.frames(pts.reshape(-1, 2))
    shape3 = pts.shape

    smap = SurrogateMap(
        mu=float(mu),
        active=active,
        ghost_nodes=ghost_nodes,
        outer_dirichlet_nodes=mesh.boundary_nodes,
        edge_nodes=edge_nodes,
        edge_owner=owner,
        edge_normal=normal,
        edge_length=length,
        edge_h_perp=h_perp,
        quad_points=pts,
        quad_weights=weights,
        quad_x=fr.x.reshape(shape3),
        quad_d=fr.d.reshape(shape3),
        quad_n=fr.n.reshape(shape3),
        quad_tau=fr.tau.reshape(shape3),
    )
    if check:
        bad = smap.n_dot_ntilde.min(axis=1) < -1e-12
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise GeometryError(
                f"minimal resolution condition n.n_tilde >= 0 violated at mu={mu} on surrogate "
                f"edge {tuple(edge_nodes[k])} (n.n_tilde={smap.n_dot_ntilde[k].min():.3e}); "
                "refine the background mesh"
            )
    return smap
