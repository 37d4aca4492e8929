"""Full-order solves and the manufactured-solution convergence harness."""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FomSystem, ProblemData, assemble
from .mesh import BackgroundMesh, Box, build_structured_mesh
from .surrogate import classify

__all__ = [
    "SolverError",
    "FomSolution",
    "solve",
    "is_coercive",
    "fom_query",
    "ConvergenceRow",
    "convergence_study",
]

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FomSolution:
    T: np.ndarray
    mu: float
    solve_time: float
    residual: float


def _relative_residual(system: FomSystem, T: np.ndarray) -> float:
    r = system.A @ T - system.F
    scale = np.linalg.norm(system.F)
    return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def solve(system: FomSystem, method: str = "direct") -> FomSolution:
    """Solve ``A T = F`` by sparse LU (default) or conjugate gradients.

    Raises
    ------
    SolverError
        If the matrix is singular or the relative residual exceeds 1e-10.
    """
    A = system.A
    t0 = time.perf_counter()
    if method == "direct":
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                T = spla.spsolve(A.tocsc(), system.F)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SolverError(
                    f"singular FOM matrix at mu={system.mu} ({exc}); "
                    "check the Nitsche penalty and the classification"
                ) from exc
    elif method == "cg":
        T, info = spla.cg(A, system.F, rtol=1e-12, atol=0.0, maxiter=20 * A.shape[0])
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge at mu={system.mu} (info={info})")
    else:
        raise ValueError(f"unknown solver method {method!r}")
    elapsed = time.perf_counter() - t0
    if not np.all(np.isfinite(T)):
        raise SolverError(f"non-finite FOM solution at mu={system.mu}; matrix is singular")
    res = _relative_residual(system, T)
    if res > RESIDUAL_TOL:
        raise SolverError(f"FOM residual {res:.3e} exceeds {RESIDUAL_TOL:g} at mu={system.mu}")
    T[system.constrained] = system.F[system.constrained]
    return FomSolution(T=T, mu=system.mu, solve_time=elapsed, residual=res)


def is_coercive(system: FomSystem) -> bool:
    """Whether the free block is positive definite.

    Uses a symmetric-mode LU with diagonal pivoting, i.e. an LDL^T
    factorization; positive definiteness is equivalent to a positive ``D``.
    """
    B = system.free_block().tocsc()
    try:
        lu = spla.splu(
            B,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError:
        return False
    if not (np.array_equal(lu.perm_r, lu.perm_c)):
        return False
    return bool(np.all(lu.U.diagonal() > 0.0))


def fom_query(mesh: BackgroundMesh, shape, mu: float, problem: ProblemData, order: int = 3,
              method: str = "direct") -> tuple[FomSolution, float]:
    """Classify, assemble and solve for one parameter; returns the solution and wall time."""
    t0 = time.perf_counter()
    smap = classify(mesh, shape, mu, order=order)
    system = assemble(mesh, smap, problem)
    sol = solve(system, method=method)
    return sol, time.perf_counter() - t0


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    n_dofs: int
    error: float
    rate: float


def active_l2_error(mesh: BackgroundMesh, active: np.ndarray, T: np.ndarray, exact) -> float:
    """L2 norm over the active elements of ``T - I_h(exact)``."""
    e = T - exact(mesh.nodes)
    M = mesh.assemble_mass(active)
    return float(math.sqrt(max(e @ (M @ e), 0.0)))


def convergence_study(
    shape,
    mu: float,
    exact: Callable[[np.ndarray], np.ndarray],
    exact_grad: Callable[[np.ndarray], np.ndarray],
    source,
    h_list,
    box: Box,
    alpha: float = 4.0,
    order: int = 3,
) -> list[ConvergenceRow]:
    """Observed L2 convergence for a manufactured solution.

    ``source`` must equal ``-lap(exact)``; the Dirichlet datum on the shape
    and the wall value on the box are both taken from ``exact``.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("a convergence study needs at least three mesh sizes")
    problem = ProblemData(source=source, dirichlet=exact, dirichlet_grad=exact_grad,
                          alpha=alpha, outer=exact)
    rows: list[ConvergenceRow] = []
    for k, h in enumerate(h_list):
        mesh = build_structured_mesh(box, h)
        smap = classify(mesh, shape, mu, order=order)
        sol = solve(assemble(mesh, smap, problem))
        err = active_l2_error(mesh, smap.active, sol.T, exact)
        rate = float("nan")
        if k:
            prev = rows[-1]
            rate = math.log(prev.error / err) / math.log(prev.h / h) if err > 0 else float("inf")
        rows.append(ConvergenceRow(h=h, n_dofs=mesh.n_nodes, error=err, rate=rate))
        log.info("h=%g  dofs=%d  L2 error=%.4e  rate=%.3f", h, mesh.n_nodes, err, rate)
    return rows
