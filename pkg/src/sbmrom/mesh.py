"""Structured triangular background mesh and P1 element matrices.

The background mesh is built once and shared by every parameter value; all
per-element geometric quantities (areas, basis gradients, local stiffness)
are precomputed so that assembly for a new parameter only has to mask them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Box",
    "P1Element",
    "BackgroundMesh",
    "build_structured_mesh",
    "element_stiffness",
    "element_mass",
]

_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(points)
        return (
            (p[:, 0] >= self.xmin - tol)
            & (p[:, 0] <= self.xmax + tol)
            & (p[:, 1] >= self.ymin - tol)
            & (p[:, 1] <= self.ymax + tol)
        )

    @classmethod
    def from_sequence(cls, values) -> "Box":
        xmin, xmax, ymin, ymax = (float(v) for v in values)
        return cls(xmin, xmax, ymin, ymax)


def _triangle_gradients(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed areas ``(n,)`` and barycentric gradients ``(n, 3, 2)``.

    ``coords`` has shape ``(n, 3, 2)``.
    """
    p0, p1, p2 = coords[:, 0], coords[:, 1], coords[:, 2]
    e1 = p1 - p0
    e2 = p2 - p0
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    grads = np.full_like(coords, np.nan)
    ok = area2 != 0.0
    for i in range(3):
        a = coords[:, (i + 1) % 3]
        b = coords[:, (i + 2) % 3]
        grads[ok, i, 0] = (a[ok, 1] - b[ok, 1]) / area2[ok]
        grads[ok, i, 1] = (b[ok, 0] - a[ok, 0]) / area2[ok]
    return 0.5 * area2, grads


@dataclass(frozen=True)
class P1Element:
    """A single linear triangle: vertex ids, constant basis gradients, area."""

    nodes: np.ndarray
    gradients: np.ndarray
    area: float

    @classmethod
    def from_coords(cls, coords, nodes=(0, 1, 2)) -> "P1Element":
        coords = np.asarray(coords, dtype=float).reshape(1, 3, 2)
        area, grads = _triangle_gradients(coords)
        if area[0] <= 0.0:
            raise ValueError("triangle must be counterclockwise with positive area")
        return cls(np.asarray(nodes, dtype=np.int64), grads[0], float(area[0]))


def element_stiffness(element: P1Element) -> np.ndarray:
    """Local Laplace stiffness ``K_ij = |K| grad(phi_i) . grad(phi_j)``."""
    if element.area <= 0.0:
        raise ValueError("element area must be positive")
    g = element.gradients
    return element.area * (g @ g.T)


def element_mass(element: P1Element) -> np.ndarray:
    """Exact P1 mass matrix ``|K|/12 [[2,1,1],[1,2,1],[1,1,2]]``."""
    if element.area <= 0.0:
        raise ValueError("element area must be positive")
    return element.area * _REF_MASS


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Conforming triangulation of a rectangular box.

    Attributes
    ----------
    nodes : (N, 2) float array
        Node coordinates, numbered row-major from the bottom-left corner.
    elements : (Ne, 3) int array
        Counterclockwise vertex triples.
    edges : (E, 2) int array
        Unique edges with ``edges[:, 0] < edges[:, 1]``.
    edge_elements : (E, 2) int array
        Owner elements of each edge; ``-1`` in the second column for edges on
        the outer boundary.
    boundary_nodes : int array
        Nodes on the outer boundary of the box.
    element_edges : (Ne, 3) int array
        Edge ids of every element; local edge ``k`` is opposite vertex ``k``.
    h : float
        Requested mesh size.
    """

    box: Box
    h: float
    nx: int
    ny: int
    nodes: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    boundary_nodes: np.ndarray
    element_edges: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def coords(self) -> np.ndarray:
        """Element vertex coordinates, shape ``(Ne, 3, 2)``."""
        return self.nodes[self.elements]

    @cached_property
    def _geometry(self) -> tuple[np.ndarray, np.ndarray]:
        return _triangle_gradients(self.coords)

    @property
    def areas(self) -> np.ndarray:
        return self._geometry[0]

    @property
    def gradients(self) -> np.ndarray:
        return self._geometry[1]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.coords.mean(axis=1)

    @cached_property
    def local_stiffness(self) -> np.ndarray:
        """All element stiffness matrices, shape ``(Ne, 3, 3)``."""
        g = self.gradients
        return self.areas[:, None, None] * np.einsum("eik,ejk->eij", g, g)

    @cached_property
    def local_mass(self) -> np.ndarray:
        return self.areas[:, None, None] * _REF_MASS[None]

    @cached_property
    def triplet_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Row/column indices matching ``local_stiffness.reshape(Ne, 9)``."""
        el = self.elements
        rows = np.repeat(el, 3, axis=1)
        cols = np.tile(el, (1, 3))
        return rows, cols

    @cached_property
    def cache(self) -> dict:
        """Scratch space for parameter-independent data derived from this mesh."""
        return {}

    @cached_property
    def node_valence(self) -> np.ndarray:
        """Number of elements around every node."""
        return np.bincount(self.elements.ravel(), minlength=self.n_nodes)

    @cached_property
    def wall_elements(self) -> np.ndarray:
        """Mask of elements with a vertex on the outer boundary."""
        on_wall = np.zeros(self.n_nodes, dtype=bool)
        on_wall[self.boundary_nodes] = True
        return on_wall[self.elements].any(axis=1)

    @cached_property
    def h_realized(self) -> float:
        return max(self.box.width / self.nx, self.box.height / self.ny)

    def element(self, k: int) -> P1Element:
        return P1Element(self.elements[k].copy(), self.gradients[k].copy(), float(self.areas[k]))

    def assemble_stiffness(self, mask: np.ndarray | None = None) -> sp.csr_matrix:
        """Global stiffness over all elements, or only those selected by ``mask``."""
        return self._assemble(self.local_stiffness, mask)

    def assemble_mass(self, mask: np.ndarray | None = None) -> sp.csr_matrix:
        return self._assemble(self.local_mass, mask)

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        """Stiffness over the whole box."""
        return self.assemble_stiffness()

    @cached_property
    def constrained_stiffness(self) -> sp.csr_matrix:
        """Box stiffness with identity rows and columns on the outer boundary.

        This is the parameter-independent reference operator: the operator of
        any parameter value differs from it only near the embedded shape.
        """
        K = self.stiffness_matrix.tocoo()
        outer = np.zeros(self.n_nodes, dtype=bool)
        outer[self.boundary_nodes] = True
        keep = ~(outer[K.row] | outer[K.col])
        b = self.boundary_nodes
        rows = np.concatenate([K.row[keep], b])
        cols = np.concatenate([K.col[keep], b])
        vals = np.concatenate([K.data[keep], np.ones(b.size)])
        A = sp.csr_matrix((vals, (rows, cols)), shape=K.shape)
        A.sort_indices()
        return A

    @cached_property
    def outer_columns(self) -> sp.csr_matrix:
        """Columns of the box stiffness that belong to outer-boundary nodes."""
        return self.stiffness_matrix.tocsc()[:, self.boundary_nodes].tocsr()

    @cached_property
    def data_rows(self) -> np.ndarray:
        """Row index of every stored entry of ``constrained_stiffness``."""
        A = self.constrained_stiffness
        return np.repeat(np.arange(self.n_nodes), np.diff(A.indptr))

    @cached_property
    def diagonal_positions(self) -> np.ndarray:
        """Position of ``A_ii`` in ``constrained_stiffness.data`` for every node."""
        return self._positions(np.arange(self.n_nodes), np.arange(self.n_nodes))

    @cached_property
    def transpose_positions(self) -> np.ndarray:
        """Position of the mirrored entry ``(j, i)`` for every stored ``(i, j)``.

        The pattern of ``constrained_stiffness`` is symmetric.
        """
        A = self.constrained_stiffness
        pos = self._positions(A.indices, self.data_rows)
        if pos.min() < 0:
            raise RuntimeError("stiffness pattern is not symmetric")
        return pos

    def row_positions(self, rows: np.ndarray) -> np.ndarray:
        """Positions in ``constrained_stiffness.data`` of all entries of ``rows``."""
        indptr = self.constrained_stiffness.indptr
        start = indptr[rows]
        count = indptr[rows + 1] - start
        offset = np.repeat(start - np.cumsum(count) + count, count)
        return offset + np.arange(count.sum())

    @cached_property
    def stiffness_positions(self) -> np.ndarray:
        """``(Ne, 9)`` positions of the element triplets in ``constrained_stiffness.data``.

        Entries coupling an outer-boundary node to another node are not stored
        there and are marked ``-1``.
        """
        rows, cols = self.triplet_index
        return self._positions(rows.ravel(), cols.ravel()).reshape(-1, 9)

    def _positions(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        A = self.constrained_stiffness
        n = self.n_nodes
        # canonical CSR is sorted by (row, col), hence by row * n + col
        keys = self.data_rows * n + A.indices
        want = rows * n + cols
        pos = np.minimum(np.searchsorted(keys, want), keys.size - 1)
        return np.where(keys[pos] == want, pos, -1)

    @cached_property
    def unit_load(self) -> np.ndarray:
        """Load vector of ``f = 1`` with centroid quadrature over the whole box."""
        return np.bincount(self.elements.ravel(), weights=np.repeat(self.areas / 3.0, 3),
                           minlength=self.n_nodes)

    def elements_in_box(self, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
        """Elements whose cell overlaps ``[x0, x1] x [y0, y1]``, plus one cell of margin."""
        dx = self.box.width / self.nx
        dy = self.box.height / self.ny
        i0 = max(int(math.floor((x0 - self.box.xmin) / dx)) - 1, 0)
        i1 = min(int(math.ceil((x1 - self.box.xmin) / dx)) + 1, self.nx)
        j0 = max(int(math.floor((y0 - self.box.ymin) / dy)) - 1, 0)
        j1 = min(int(math.ceil((y1 - self.box.ymin) / dy)) + 1, self.ny)
        if i0 >= i1 or j0 >= j1:
            return np.zeros(0, dtype=np.int64)
        cells = (np.arange(j0, j1)[:, None] * self.nx + np.arange(i0, i1)[None, :]).ravel()
        # two triangles per cell, stored consecutively
        return (2 * cells[:, None] + np.arange(2)[None, :]).ravel()

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        """Mass matrix over the whole box (the fixed POD inner product)."""
        return self.assemble_mass()

    def _assemble(self, local: np.ndarray, mask: np.ndarray | None) -> sp.csr_matrix:
        rows, cols = self.triplet_index
        vals = local.reshape(-1, 9)
        if mask is not None:
            rows, cols, vals = rows[mask], cols[mask], vals[mask]
        n = self.n_nodes
        return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def _edge_connectivity(elements: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ne = elements.shape[0]
    # local edge k is opposite vertex k
    local = np.stack(
        [elements[:, [1, 2]], elements[:, [2, 0]], elements[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    owner = np.repeat(np.arange(ne), 3)
    key = np.sort(local, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if counts.max() > 2:
        raise ValueError("non-manifold mesh: an edge has more than two owners")
    order = np.argsort(inverse, kind="stable")
    edge_elements = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    first = np.ones(order.size, dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    edge_elements[inverse[order][first], 0] = owner[order][first]
    edge_elements[inverse[order][~first], 1] = owner[order][~first]
    return edges.astype(np.int64), edge_elements, inverse.reshape(ne, 3).astype(np.int64)


def build_structured_mesh(box: Box, h: float) -> BackgroundMesh:
    """Uniform grid of ``nx x ny`` cells, each cut along its SW-NE diagonal.

    ``nx = ceil(width / h)`` and ``ny = ceil(height / h)`` so the realized cell
    size never exceeds ``h``.
    """
    if not (box.width > 0 and box.height > 0):
        raise ValueError(f"degenerate box {box}")
    if not h > 0:
        raise ValueError(f"mesh size must be positive, got {h}")
    if h > min(box.width, box.height):
        raise ValueError(f"mesh size {h} exceeds the box dimensions")
    # guard against ceil(40.000000000000004) style round-up
    nx = int(math.ceil(box.width / h - 1e-9))
    ny = int(math.ceil(box.height / h - 1e-9))
    xs = np.linspace(box.xmin, box.xmax, nx + 1)
    ys = np.linspace(box.ymin, box.ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n0 = j * (nx + 1) + i
    n1 = n0 + 1
    n2 = n1 + nx + 1
    n3 = n0 + nx + 1
    lower = np.column_stack([n0, n1, n2])
    upper = np.column_stack([n0, n2, n3])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3).astype(np.int64)

    edges, edge_elements, element_edges = _edge_connectivity(elements)
    on_boundary = edge_elements[:, 1] < 0
    boundary_nodes = np.unique(edges[on_boundary])
    return BackgroundMesh(
        box=box,
        h=float(h),
        nx=nx,
        ny=ny,
        nodes=nodes,
        elements=elements,
        edges=edges,
        edge_elements=edge_elements,
        boundary_nodes=boundary_nodes,
        element_edges=element_edges,
    )
