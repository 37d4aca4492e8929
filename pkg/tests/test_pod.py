import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from sbmrom import ProblemData, SnapshotSet, assemble, classify, pod, project, reconstruct, solve, solve_reduced
from sbmrom.pod import ReducedSystem, correlation_matrix, l2_projection_error, relative_l2_error


def element_inner(mesh, u, v):
    """(u, v) in L2 by exact element-wise integration of P1 functions."""
    total = 0.0
    for k, nodes in enumerate(mesh.elements):
        a, b = u[nodes], v[nodes]
        total += mesh.areas[k] / 12.0 * (a @ b + a.sum() * b.sum())
    return total


def weighted_svd_modes(S, M):
    W = la.sqrtm(M.toarray()).real
    U, s, _ = la.svd(W @ S, full_matrices=False)
    return la.solve(W, U), s


@pytest.fixture(scope="module")
def coarse_snapshots(coarse_mesh, ycenter):
    mus = np.linspace(-0.35, 0.35, 9)
    S = np.column_stack([solve(assemble(coarse_mesh, classify(coarse_mesh, ycenter, m), ProblemData())).T for m in mus])
    return SnapshotSet(S, mus, coarse_mesh.mass_matrix)


def test_correlation_matches_element_quadrature(coarse_mesh, coarse_snapshots):
    C = correlation_matrix(coarse_snapshots)
    S = coarse_snapshots.S
    for i, j in [(0, 0), (0, 4), (3, 8), (8, 8)]:
        assert C[i, j] == pytest.approx(element_inner(coarse_mesh, S[:, i], S[:, j]), rel=1e-12)
    np.testing.assert_array_equal(C, C.T)


def test_single_snapshot(coarse_mesh, coarse_snapshots):
    T = coarse_snapshots.S[:, 2]
    single = SnapshotSet(T[:, None], [0.0], coarse_mesh.mass_matrix)
    norm2 = T @ (coarse_mesh.mass_matrix @ T)
    np.testing.assert_allclose(correlation_matrix(single), [[norm2]], rtol=1e-14)
    basis = pod(single)
    assert basis.n_modes == 1
    assert basis.eigenvalues[0] == pytest.approx(norm2, rel=1e-14)
    np.testing.assert_allclose(basis.L[:, 0], T / np.sqrt(norm2), atol=1e-14)


def test_duplicated_columns_rank_one(coarse_mesh, coarse_snapshots):
    T = coarse_snapshots.S[:, 5]
    dup = SnapshotSet(np.column_stack([T, T, T]), [0.0, 0.0, 0.0], coarse_mesh.mass_matrix)
    assert np.linalg.matrix_rank(correlation_matrix(dup), tol=1e-10 * np.abs(T).max()) == 1
    assert pod(dup).n_modes == 1
    with pytest.raises(ValueError, match="numerical rank 1"):
        pod(dup, n_modes=2)


def test_matches_weighted_svd(coarse_snapshots):
    basis = pod(coarse_snapshots)
    modes, s = weighted_svd_modes(coarse_snapshots.S, coarse_snapshots.mass)
    r = basis.n_modes
    np.testing.assert_allclose(basis.eigenvalues, s[:r] ** 2, rtol=1e-8, atol=1e-12 * s[0] ** 2)
    # well separated leading modes agree up to sign
    for i in range(3):
        v = modes[:, i] * np.sign(modes[:, i] @ basis.L[:, i])
        np.testing.assert_allclose(basis.L[:, i], v, atol=1e-8 * np.abs(v).max())


def test_orthonormal_and_sorted(coarse_snapshots):
    basis = pod(coarse_snapshots)
    assert basis.orthonormality_defect() <= 1e-12
    lam = basis.eigenvalues
    assert np.all(lam > 0) and np.all(np.diff(lam) <= 0)
    # sign convention: the largest-magnitude entry of every mode is positive
    idx = np.argmax(np.abs(basis.L), axis=0)
    assert np.all(basis.L[idx, np.arange(basis.n_modes)] > 0)


def test_degenerate_spectrum_span(coarse_mesh):
    M = coarse_mesh.mass_matrix
    x, y = coarse_mesh.nodes.T
    u = np.sin(np.pi * x / 2)  # odd in x
    v = np.cos(np.pi * x / 4) * np.cos(np.pi * y / 2)  # even in x
    u /= np.sqrt(u @ M @ u)
    v /= np.sqrt(v @ M @ v)
    assert abs(u @ M @ v) < 1e-12
    basis = pod(SnapshotSet(np.column_stack([u, v]), [0, 1], M))
    assert basis.eigenvalues[0] == pytest.approx(basis.eigenvalues[1], rel=1e-10)
    W = la.sqrtm(M.toarray()).real
    assert la.subspace_angles(W @ basis.L, W @ np.column_stack([u, v])).max() < 1e-8


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
@settings(max_examples=20, deadline=None)
def test_energy_truncation(coarse_mesh, seed, n):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((coarse_mesh.n_nodes, n))
    full = pod(SnapshotSet(S, np.arange(n), coarse_mesh.mass_matrix))
    part = pod(SnapshotSet(S, np.arange(n), coarse_mesh.mass_matrix), energy_tol=0.2)
    frac = np.cumsum(full.eigenvalues) / full.eigenvalues.sum()
    k = part.n_modes
    assert frac[k - 1] >= 0.8 - 1e-12
    assert k == 1 or frac[k - 2] < 0.8
    assert np.all(frac[:-1] <= frac[1:]) and 0 < frac[0] <= 1


def test_pod_argument_errors(coarse_mesh, coarse_snapshots):
    with pytest.raises(ValueError, match="either"):
        pod(coarse_snapshots, n_modes=2, energy_tol=0.1)
    with pytest.raises(ValueError, match="zero"):
        pod(SnapshotSet(np.zeros((coarse_mesh.n_nodes, 2)), [0, 1], coarse_mesh.mass_matrix))
    with pytest.raises(ValueError):
        SnapshotSet(np.zeros((coarse_mesh.n_nodes, 2)), [0], coarse_mesh.mass_matrix)
    with pytest.raises(ValueError, match="numerical rank"):
        pod(coarse_snapshots, n_modes=100)


def test_projection_error_identities(coarse_mesh, coarse_snapshots):
    basis = pod(coarse_snapshots)
    M = coarse_mesh.mass_matrix
    inside = basis.L @ np.arange(1.0, basis.n_modes + 1)
    assert l2_projection_error(inside, basis) <= 1e-10
    w = np.random.default_rng(0).standard_normal(coarse_mesh.n_nodes)
    w -= basis.L @ (basis.L.T @ (M @ w))
    assert l2_projection_error(w, basis) == pytest.approx(1.0, abs=1e-10)
    assert relative_l2_error(w, w, M) == 0.0


def test_one_mode_reproduction(coarse_mesh, coarse_snapshots, ycenter):
    mu = coarse_snapshots.parameters[3]
    T = coarse_snapshots.S[:, 3]
    basis = pod(SnapshotSet(T[:, None], [mu], coarse_mesh.mass_matrix))
    system = assemble(coarse_mesh, classify(coarse_mesh, ycenter, mu), ProblemData())
    Tr = reconstruct(basis, solve_reduced(project(system, basis)))
    assert relative_l2_error(T, Tr, coarse_mesh.mass_matrix) <= 1e-8


def test_full_basis_reproduces_fom(coarse_mesh, ycenter):
    n = coarse_mesh.n_nodes
    basis = pod(SnapshotSet(np.eye(n), np.arange(n), coarse_mesh.mass_matrix))
    assert basis.n_modes == n
    system = assemble(coarse_mesh, classify(coarse_mesh, ycenter, 0.17), ProblemData())
    T = solve(system).T
    Tr = reconstruct(basis, solve_reduced(project(system, basis, method="dense")))
    np.testing.assert_allclose(Tr, T, atol=1e-9 * np.abs(T).max())


@pytest.mark.parametrize("k", [1, 4, 9])
def test_split_projection_equals_dense(coarse_mesh, coarse_snapshots, ycenter, k):
    basis = pod(coarse_snapshots)
    system = assemble(coarse_mesh, classify(coarse_mesh, ycenter, 0.05), ProblemData(source=1.5, outer=0.2))
    a = project(system, basis, k, method="split")
    b = project(system, basis, k, method="dense")
    scale = np.abs(b.A).max()
    np.testing.assert_allclose(a.A, b.A, atol=1e-13 * scale)
    np.testing.assert_allclose(a.F, b.F, atol=1e-13 * np.abs(b.F).max())
    assert "project" in a.timings
    # truncated copies share the cached reduced background operator
    assert basis.truncate(2)._reduced_reference is basis._reduced_reference


def test_project_errors(coarse_mesh, coarse_snapshots, ycenter):
    basis = pod(coarse_snapshots)
    system = assemble(coarse_mesh, classify(coarse_mesh, ycenter, 0.0), ProblemData())
    with pytest.raises(ValueError):
        project(system, basis, 0)
    with pytest.raises(ValueError):
        project(system, basis, basis.n_modes + 1)
    with pytest.raises(ValueError, match="unknown projection"):
        project(system, basis, 1, method="qr")
    with pytest.raises(ValueError):
        solve_reduced(ReducedSystem(A=np.zeros((0, 0)), F=np.zeros(0)))
    with pytest.raises(np.linalg.LinAlgError, match="singular"):
        solve_reduced(ReducedSystem(A=np.zeros((2, 2)), F=np.ones(2)))
    with pytest.raises(ValueError):
        basis.truncate(0)
