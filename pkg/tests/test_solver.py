import numpy as np
import pytest
import scipy.sparse as sp

from sbmrom import Box, FixedDisc, ProblemData, assemble, build_structured_mesh, classify, convergence_study, solve
from sbmrom.assembly import FomSystem
from sbmrom.solver import SolverError, active_l2_error, fom_query


def test_zero_data(coarse_mesh, ycenter):
    problem = ProblemData(source=0.0, dirichlet=0.0, outer=0.0)
    sol = solve(assemble(coarse_mesh, classify(coarse_mesh, ycenter, 0.2), problem))
    assert not np.any(sol.T)


def test_residual_and_constraints(exp1_mesh, ycenter, problem):
    system = assemble(exp1_mesh, classify(exp1_mesh, ycenter, 0.403), problem)
    sol = solve(system)
    assert sol.residual <= 1e-10
    assert sol.mu == pytest.approx(0.403)
    np.testing.assert_array_equal(sol.T[system.constrained], system.F[system.constrained])


def test_cg_matches_direct(coarse_mesh, ycenter, problem):
    system = assemble(coarse_mesh, classify(coarse_mesh, ycenter, -0.3), problem)
    a = solve(system).T
    b = solve(system, method="cg").T
    np.testing.assert_allclose(b, a, atol=1e-9 * np.abs(a).max())
    with pytest.raises(ValueError, match="unknown solver"):
        solve(system, method="gmres")


def test_disc_point_symmetry(exp1_mesh, problem):
    smap = classify(exp1_mesh, FixedDisc(radius=0.5), 0.0)
    T = solve(assemble(exp1_mesh, smap, problem)).T
    np.testing.assert_allclose(T[::-1], T, atol=1e-12 * np.abs(T).max())


@pytest.mark.parametrize("mu", [0.0, 0.21, 0.5])
def test_ycenter_reflection(exp1_mesh, ycenter, problem, mu):
    Tp = solve(assemble(exp1_mesh, classify(exp1_mesh, ycenter, mu), problem)).T
    Tm = solve(assemble(exp1_mesh, classify(exp1_mesh, ycenter, -mu), problem)).T
    np.testing.assert_allclose(Tm[::-1], Tp, atol=1e-12 * np.abs(Tp).max())


@pytest.mark.parametrize("mu", [-0.5, 0.0, 0.37])
def test_bounded_undershoot(exp1_mesh, ycenter, problem, mu):
    # g_D = 0 is imposed weakly at a shifted boundary, so small negative values are allowed
    T = solve(assemble(exp1_mesh, classify(exp1_mesh, ycenter, mu), problem)).T
    assert T.max() > 0
    assert T.min() >= -0.01 * T.max()


def test_singular_matrix_error():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    system = FomSystem(A=A, F=np.array([1.0, 2.0]), free=np.ones(2, dtype=bool), mu=0.1)
    with pytest.raises(SolverError, match="singular"):
        solve(system)


def test_fom_query(coarse_mesh, ycenter, problem):
    sol, elapsed = fom_query(coarse_mesh, ycenter, 0.1, problem)
    assert elapsed > 0
    assert sol.T.shape == (coarse_mesh.n_nodes,)


def test_linear_exact_solution_every_h():
    rows = convergence_study(
        FixedDisc(radius=0.5),
        0.0,
        exact=lambda p: 3.0 - p[..., 0] + 0.5 * p[..., 1],
        exact_grad=lambda p: np.broadcast_to([-1.0, 0.5], np.shape(p)).copy(),
        source=0.0,
        h_list=(0.25, 0.14, 0.07),
        box=Box(-2.0, 2.0, -1.0, 1.0),
    )
    assert [r.h for r in rows] == [0.25, 0.14, 0.07]
    assert max(r.error for r in rows) <= 1e-10


def test_convergence_needs_three_sizes():
    with pytest.raises(ValueError):
        convergence_study(FixedDisc(), 0.0, lambda p: p[..., 0], lambda p: p, 0.0, (0.1, 0.05), Box(-2, 2, -1, 1))


def test_active_l2_error_of_constant_shift(coarse_mesh, ycenter):
    smap = classify(coarse_mesh, ycenter, 0.0)
    area = coarse_mesh.areas[smap.active].sum()
    err = active_l2_error(coarse_mesh, smap.active, np.full(coarse_mesh.n_nodes, 2.0), lambda p: np.zeros(len(p)))
    assert err == pytest.approx(2.0 * np.sqrt(area))
