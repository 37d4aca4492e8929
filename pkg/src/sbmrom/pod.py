"""POD basis by the method of snapshots and Galerkin reduced systems.

All inner products are mass-weighted L2 products over the whole background
box. Snapshots vanish at ghost and outer-boundary nodes, so the box product
coincides with the product over each snapshot's own domain while staying the
same for every parameter value.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .assembly import FomSystem

__all__ = [
    "SnapshotSet",
    "PodBasis",
    "ReducedSystem",
    "correlation_matrix",
    "pod",
    "project",
    "solve_reduced",
    "reconstruct",
    "l2_projection_error",
    "relative_l2_error",
]

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Snapshot matrix ``S`` (one FOM solution per column) and its parameters."""

    S: np.ndarray
    parameters: np.ndarray
    mass: sp.spmatrix

    def __post_init__(self):
        if self.S.ndim != 2 or self.S.shape[1] < 1:
            raise ValueError("snapshot matrix must be 2-D with at least one column")
        if len(self.parameters) != self.S.shape[1]:
            raise ValueError("one parameter value per snapshot column is required")

    @property
    def n_snapshots(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True, eq=False)
class PodBasis:
    """Mass-orthonormal modes ``L`` and the full sorted POD eigenvalue list."""

    L: np.ndarray
    eigenvalues: np.ndarray
    mass: sp.spmatrix = field(repr=False)
    # reduced background operators, shared by truncated copies
    _reduced_reference: dict = field(default_factory=dict, repr=False)

    @property
    def n_modes(self) -> int:
        return self.L.shape[1]

    def truncate(self, n: int) -> "PodBasis":
        if not 1 <= n <= self.n_modes:
            raise ValueError(f"cannot keep {n} modes out of {self.n_modes}")
        return replace(self, L=self.L[:, :n])

    def gram(self) -> np.ndarray:
        return self.L.T @ (self.mass @ self.L)

    def orthonormality_defect(self) -> float:
        return float(np.abs(self.gram() - np.eye(self.n_modes)).max())


@dataclass(eq=False)
class ReducedSystem:
    A: np.ndarray
    F: np.ndarray
    a: np.ndarray | None = None
    timings: dict = field(default_factory=dict)


def correlation_matrix(snapshots: SnapshotSet) -> np.ndarray:
    """``C_ij = (T_i, T_j)`` in the mass-weighted L2 product."""
    S = snapshots.S
    C = S.T @ (snapshots.mass @ S)
    return 0.5 * (C + C.T)


def _mass_orthonormalize(L: np.ndarray, M, passes: int = 2) -> np.ndarray:
    # Cholesky QR in the M-product; the triangular factor keeps leading spans nested
    for _ in range(passes):
        G = L.T @ (M @ L)
        R = la.cholesky(0.5 * (G + G.T), lower=False)
        L = la.solve_triangular(R, L.T, trans="T", lower=False).T
    return L


def pod(snapshots: SnapshotSet, n_modes: int | None = None, energy_tol: float | None = None,
        rank_tol: float = RANK_TOL) -> PodBasis:
    """POD modes from the eigendecomposition of the correlation matrix.

    Exactly one of ``n_modes`` and ``energy_tol`` may be given; with neither,
    every mode above the rank cutoff ``rank_tol * lambda_max`` is kept. With
    ``energy_tol`` the smallest ``m`` whose captured energy fraction reaches
    ``1 - energy_tol`` is used.
    """
    if n_modes is not None and energy_tol is not None:
        raise ValueError("give either n_modes or energy_tol, not both")
    S = snapshots.S
    ns = snapshots.n_snapshots
    C = correlation_matrix(snapshots)
    lam, Q = la.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, Q = lam[order], Q[:, order]
    lam = np.clip(lam, 0.0, None)
    if lam[0] <= 0.0:
        raise ValueError("all snapshots are zero")
    rank = int(np.count_nonzero(lam > rank_tol * lam[0]))

    if energy_tol is not None:
        if not 0.0 <= energy_tol < 1.0:
            raise ValueError("energy_tol must lie in [0, 1)")
        frac = np.cumsum(lam[:rank]) / lam[:rank].sum()
        n_modes = int(np.searchsorted(frac, 1.0 - energy_tol - 1e-15) + 1)
        n_modes = min(n_modes, rank)
    elif n_modes is None:
        n_modes = rank
    if n_modes < 1:
        raise ValueError("at least one mode is required")
    if n_modes > rank:
        raise ValueError(
            f"requested {n_modes} modes but the snapshot set has numerical rank {rank}"
        )

    coeff = Q[:, :n_modes] / (ns * np.sqrt(lam[:n_modes]))
    L = S @ coeff
    M = snapshots.mass
    norms = np.sqrt(np.einsum("ij,ij->j", L, M @ L))
    L = _mass_orthonormalize(L / norms, M)
    # sign: largest-magnitude entry of every mode positive
    pick = np.argmax(np.abs(L), axis=0)
    L *= np.sign(L[pick, np.arange(n_modes)])
    return PodBasis(L=np.ascontiguousarray(L), eigenvalues=lam[:rank], mass=M)


def _reduced_reference(basis: PodBasis, system: FomSystem, n: int) -> tuple[np.ndarray, np.ndarray]:
    key = (id(system.reference), id(system.reference_load))
    hit = basis._reduced_reference.get(key)
    if hit is None or hit[0] is not system.reference or hit[1] is not system.reference_load:
        L = basis.L
        hit = (system.reference, system.reference_load, L.T @ (system.reference @ L), L.T @ system.reference_load)
        basis._reduced_reference[key] = hit
    return hit[2][:n, :n], hit[3][:n]


def project(system: FomSystem, basis: PodBasis, n_modes: int | None = None,
            method: str = "split") -> ReducedSystem:
    """Galerkin projection ``A_r = L^T A L``, ``F_r = L^T F``.

    ``method="split"`` writes ``A = K0 + D`` and ``F = F0 + f`` with the
    parameter-independent operator and load of the box (``system.reference``
    and ``system.reference_load``) and corrections supported on a few nodes
    near the shape. ``L^T K0 L`` and ``L^T F0`` are computed once per basis,
    so each query only projects the small corrections. The result equals the
    dense product up to round-off; ``method="dense"`` forms ``L^T (A L)``
    directly. Systems without reference data fall back to dense.
    """
    n = basis.n_modes if n_modes is None else int(n_modes)
    if not 1 <= n <= basis.n_modes:
        raise ValueError(f"cannot project onto {n} modes out of {basis.n_modes}")
    if basis.L.shape[0] != system.n_dofs:
        raise ValueError(f"basis has {basis.L.shape[0]} rows, system has {system.n_dofs} dofs")
    if method not in ("split", "dense"):
        raise ValueError(f"unknown projection method {method!r}")
    if method == "split" and (system.correction is None or system.reference_load is None):
        method = "dense"
    if method == "split":
        _reduced_reference(basis, system, n)  # offline part, not timed
    t0 = time.perf_counter()
    if method == "dense":
        L = basis.L[:, :n]
        Ar = L.T @ (system.A @ L)
        Fr = L.T @ system.F
    else:
        A0, F0 = _reduced_reference(basis, system, n)
        c = system.correction
        LS = basis.L[c.support, :n]
        Ar = A0 + LS.T @ (c.matrix @ LS)
        Fr = F0 + LS.T @ c.load
    return ReducedSystem(A=Ar, F=Fr, timings={"project": time.perf_counter() - t0})


def solve_reduced(reduced: ReducedSystem) -> np.ndarray:
    """Dense solve of the reduced system; stores and returns the coefficients."""
    if reduced.A.size == 0:
        raise ValueError("reduced system has no modes")
    if not np.all(np.isfinite(reduced.A)):
        raise np.linalg.LinAlgError("reduced operator contains NaN or Inf")
    t0 = time.perf_counter()
    try:
        a = np.linalg.solve(reduced.A, reduced.F)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular reduced operator ({exc}); basis is rank deficient") from exc
    reduced.timings["solve"] = time.perf_counter() - t0
    reduced.a = a
    return a


def reconstruct(basis: PodBasis, a: np.ndarray) -> np.ndarray:
    return basis.L[:, : a.size] @ a


def _mnorm(M, v) -> float:
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def relative_l2_error(reference: np.ndarray, approx: np.ndarray, M) -> float:
    return _mnorm(M, reference - approx) / _mnorm(M, reference)


def l2_projection_error(T: np.ndarray, basis: PodBasis, n_modes: int | None = None) -> float:
    """Relative error of the mass-orthogonal projection of ``T`` onto the modes."""
    L = basis.L if n_modes is None else basis.L[:, :n_modes]
    M = basis.mass
    PT = L @ (L.T @ (M @ T))
    return relative_l2_error(T, PT, M)
