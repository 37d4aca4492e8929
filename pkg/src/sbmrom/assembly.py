"""Shifted boundary assembly of the full-order operator ``A(mu)`` and load ``F(mu)``.

Volume terms live on the active elements; boundary terms are integrated on
the surrogate edges, where the Dirichlet data are imposed on the shifted
trace ``T + grad(T) . d``. Ghost nodes and outer-boundary nodes are
constrained through identity rows; their columns are lifted into the load so
the operator stays symmetric and the vector size is the same for every
parameter value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import BackgroundMesh
from .surrogate import SurrogateMap

__all__ = [
    "ProblemData",
    "Correction",
    "FomSystem",
    "assemble",
    "reference_load",
    "dirichlet_data",
    "free_block_symmetry_check",
]

Field = Union[float, Callable[[np.ndarray], np.ndarray]]

# below this distance the (n . n_tilde)/|d| term is dropped
D_EPS = 1e-12


def _evaluate(field: Field, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if callable(field):
        return np.asarray(field(points), dtype=float).reshape(points.shape[:-1])
    return np.full(points.shape[:-1], float(field))


@dataclass(frozen=True)
class ProblemData:
    """Data of ``-lap(T) = f`` with ``T = g_D`` on the embedded boundary.

    Callables receive an ``(..., 2)`` array of points. When ``dirichlet`` is a
    callable, ``dirichlet_grad`` must return its ambient gradient (``(..., 2)``);
    for a constant ``dirichlet`` it is zero. ``outer`` is the wall value on the
    box boundary.
    """

    source: Field = 1.0
    dirichlet: Field = 0.0
    dirichlet_grad: Callable[[np.ndarray], np.ndarray] | None = None
    alpha: float = 4.0
    outer: Field = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"Nitsche penalty must be positive, got {self.alpha}")
        if callable(self.dirichlet) and self.dirichlet_grad is None:
            raise ValueError("a callable Dirichlet datum needs dirichlet_grad")


def dirichlet_data(problem: ProblemData, x, tau) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet value at ``x`` and its derivative along ``tau``."""
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    g = _evaluate(problem.dirichlet, x)
    if problem.dirichlet_grad is None:
        return g, np.zeros_like(g)
    grad = np.asarray(problem.dirichlet_grad(x), dtype=float).reshape(x.shape)
    return g, np.sum(grad * tau, axis=-1)


@dataclass(frozen=True, eq=False)
class Correction:
    """``A - reference`` and ``F - reference_load`` restricted to ``support``.

    Both differences vanish outside the support nodes.
    """

    support: np.ndarray
    matrix: sp.csr_matrix
    load: np.ndarray


@dataclass(frozen=True, eq=False)
class FomSystem:
    """Assembled ``A T = F``; ``free`` marks unconstrained nodes.

    ``reference`` and ``reference_load`` are the parameter-independent
    operator and load of the box without a hole, when known; ``correction``
    then holds the (small) differences to them.
    """

    A: sp.csr_matrix
    F: np.ndarray
    free: np.ndarray
    mu: float = float("nan")
    reference: sp.csr_matrix | None = field(default=None, repr=False)
    reference_load: np.ndarray | None = field(default=None, repr=False)
    correction: Correction | None = field(default=None, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.F.size

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(~self.free)

    def free_block(self) -> sp.csr_matrix:
        idx = np.flatnonzero(self.free)
        return self.A[idx][:, idx]

    def write_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self.A, symmetry="general")


def _boundary_blocks(mesh: BackgroundMesh, smap: SurrogateMap, problem: ProblemData):
    """Local 3x3 boundary matrices and 3-vectors for every surrogate edge."""
    owner = smap.edge_owner
    G = mesh.gradients[owner]  # (E, 3, 2)
    cen = mesh.centroids[owner]
    nt = smap.edge_normal  # (E, 2)
    d = smap.quad_d  # (E, Q, 2)
    w = smap.quad_weights  # (E, Q)
    dist = smap.quad_distance

    Gt = G.transpose(0, 2, 1)
    phi = 1.0 / 3.0 + (smap.quad_points - cen[:, None, :]) @ Gt  # (E, Q, 3)
    grad_d = d @ Gt  # grad(phi_i) . d
    grad_n = (G @ nt[:, :, None])[..., 0]  # grad(phi_i) . n_tilde
    shifted = phi + grad_d

    coef = np.zeros_like(dist)
    far = dist >= D_EPS
    coef[far] = smap.n_dot_ntilde[far] / dist[far]
    pen = problem.alpha / smap.edge_h_perp  # (E,)

    ws = (w[:, None, :] @ shifted)[:, 0]  # (E, 3)
    # consistency and adjoint consistency: -s_i g_j - g_i s_j
    K = -ws[:, :, None] * grad_n[:, None, :]
    K = K + K.transpose(0, 2, 1)
    K += (grad_d * (w * coef)[..., None]).transpose(0, 2, 1) @ grad_d
    K += pen[:, None, None] * ((shifted * w[..., None]).transpose(0, 2, 1) @ shifted)

    g, dg_tau = dirichlet_data(problem, smap.quad_x, smap.quad_tau)
    tau_nt = np.einsum("eqj,ej->eq", smap.quad_tau, nt)
    wg = w * g
    f = (
        -grad_n * wg.sum(axis=1)[:, None]
        - ((w * dg_tau * tau_nt)[:, None, :] @ grad_d)[:, 0]
        + pen[:, None] * (wg[:, None, :] @ shifted)[:, 0]
    )
    return K, f


def reference_load(mesh: BackgroundMesh, problem: ProblemData) -> np.ndarray:
    """Load of the box without a hole: volume source and outer wall values.

    Cached on the mesh per problem; the returned array is read-only.
    """
    cache = mesh.cache.setdefault("reference_load", {})
    F = cache.get(problem)
    if F is None:
        n = mesh.n_nodes
        outer = mesh.boundary_nodes
        if callable(problem.source):
            fvol = _evaluate(problem.source, mesh.centroids) * mesh.areas / 3.0
            F = np.bincount(mesh.elements.ravel(), weights=np.repeat(fvol, 3), minlength=n)
        else:
            F = float(problem.source) * mesh.unit_load
        g_outer = _evaluate(problem.outer, mesh.nodes[outer])
        if np.any(g_outer):
            F -= mesh.outer_columns @ g_outer
        F[outer] = g_outer
        F.flags.writeable = False
        cache[problem] = F
    return F


def assemble(mesh: BackgroundMesh, smap: SurrogateMap, problem: ProblemData) -> FomSystem:
    """Assemble the shifted boundary system for the classification ``smap``.

    The operator shares the sparsity pattern of the cached box stiffness (with
    the outer wall already constrained): inactive element matrices are
    subtracted from it, the surrogate-edge blocks are added and ghost rows and
    columns are replaced by identity ones. The touched entries also give the
    correction ``A - reference`` as a small block over the support nodes.
    """
    if smap.active.shape[0] != mesh.n_elements:
        raise ValueError("surrogate map was built for a different mesh")
    if smap.n_edges and smap.n_dot_ntilde.min() < -1e-12:
        k = int(np.argmin(smap.n_dot_ntilde.min(axis=1)))
        raise ValueError(f"n.n_tilde < 0 on surrogate edge {tuple(smap.edge_nodes[k])}")
    n = mesh.n_nodes
    el = mesh.elements
    inactive = np.flatnonzero(~smap.active)
    outer = smap.outer_dirichlet_nodes
    ghost = smap.ghost_nodes
    K0 = mesh.constrained_stiffness

    Kb, fb = _boundary_blocks(mesh, smap, problem)
    Kb = 0.5 * (Kb + Kb.transpose(0, 2, 1))
    pos = mesh.stiffness_positions[np.concatenate([inactive, smap.edge_owner])].ravel()
    if pos.size and pos.min() < 0:
        raise ValueError("embedded shape touches the outer wall elements")
    vals = np.concatenate([-mesh.local_stiffness[inactive].ravel(), Kb.ravel()])
    data = K0.data + np.bincount(pos, weights=vals, minlength=K0.nnz)

    # identity rows and columns on ghost nodes
    grow = mesh.row_positions(ghost)
    gpos = np.concatenate([grow, mesh.transpose_positions[grow]])
    data[gpos] = 0.0
    data[mesh.diagonal_positions[ghost]] = 1.0

    touched = np.zeros(K0.nnz, dtype=bool)
    touched[pos] = True
    touched[gpos] = True
    touched = np.flatnonzero(touched)
    rows = mesh.data_rows[touched]
    in_support = np.zeros(n, dtype=bool)
    in_support[rows] = True
    support = np.flatnonzero(in_support)
    local = np.cumsum(in_support) - 1
    # touched is sorted, so the local triplets are already in CSR order
    indptr = np.concatenate([[0], np.cumsum(np.bincount(local[rows], minlength=support.size))])
    D = sp.csr_matrix((data[touched] - K0.data[touched], local[K0.indices[touched]], indptr),
                      shape=(support.size, support.size))

    A = K0.copy()
    A.data = data
    # drop exact zeros (diagonal couplings of right triangles, cleared ghost entries);
    # this compacts ``data`` in place, so it must come after the correction block
    A.eliminate_zeros()

    F0 = reference_load(mesh, problem)
    iel = el[inactive]
    fvol = _evaluate(problem.source, mesh.centroids[inactive]) * mesh.areas[inactive] / 3.0
    F = F0 - np.bincount(iel.ravel(), weights=np.repeat(fvol, 3), minlength=n)
    F += np.bincount(el[smap.edge_owner].ravel(), weights=fb.ravel(), minlength=n)
    F[ghost] = 0.0

    free = np.ones(n, dtype=bool)
    free[ghost] = False
    free[outer] = False
    return FomSystem(A=A, F=F, free=free, mu=smap.mu, reference=K0, reference_load=F0,
                     correction=Correction(support, D, F[support] - F0[support]))


def free_block_symmetry_check(system: FomSystem) -> float:
    """Largest ``|A_ij - A_ji|`` over the free block."""
    B = system.free_block()
    diff = B - B.T
    return float(abs(diff).max()) if diff.nnz else 0.0
