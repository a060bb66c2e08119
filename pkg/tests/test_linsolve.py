import numpy as np
import pytest
import scipy.sparse as sp

from phasetrack.kernels import available_backends
from phasetrack.linsolve import ConvergenceError, SpdOperator, cg_solve, default_max_iter
from phasetrack.mesh import Rectangle, build_mesh

BACKENDS = available_backends()


def make_operator(nx=8, ny=8, tau=1e-3):
    mesh = build_mesh(Rectangle(0.0, 0.0, 1.0, 1.0), nx, ny)
    return SpdOperator(mesh.lumped_mass / tau, mesh.stiffness), mesh


def run_kernel(kernel, op, rhs, x0=None, rtol=1e-10, max_iter=None):
    x = np.zeros(op.n) if x0 is None else np.array(x0, dtype=float)
    K = op.stiffness
    return kernel(
        op.diag_mass_over_tau,
        K.indptr.astype(np.int32, copy=False),
        K.indices.astype(np.int32, copy=False),
        K.data,
        op.inv_precond(),
        np.ascontiguousarray(rhs, dtype=float),
        x,
        rtol,
        max_iter if max_iter is not None else default_max_iter(op.n),
    ) + (x,)


def test_zero_stiffness_limit_is_diagonal_solve():
    tau = 1e-3
    mesh = build_mesh(Rectangle(0.0, 0.0, 1.0, 1.0), 4, 4)
    zero_K = sp.csr_matrix(mesh.stiffness.shape)
    op = SpdOperator(mesh.lumped_mass / tau, zero_K)
    rhs = np.linspace(1.0, 2.0, op.n)
    x = cg_solve(op, rhs, rtol=1e-14)
    assert np.allclose(x, tau * rhs / mesh.lumped_mass, rtol=0, atol=1e-13)


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_recovers_random_solutions(backend):
    op, _ = make_operator()
    rng = np.random.default_rng(7)
    for _ in range(3):
        v = rng.standard_normal(op.n)
        rhs = op.apply(v)
        iters, relres, converged = run_kernel(BACKENDS[backend], op, rhs)[:3]
        x = run_kernel(BACKENDS[backend], op, rhs)[3]
        assert converged
        assert np.linalg.norm(op.apply(x) - rhs) <= 1e-10 * np.linalg.norm(rhs)
        assert np.allclose(x, v, atol=1e-8)


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_zero_rhs_returns_zero(backend):
    op, _ = make_operator(4, 4)
    iters, relres, converged, x = run_kernel(
        BACKENDS[backend], op, np.zeros(op.n), x0=np.ones(op.n)
    )
    assert converged and iters == 0
    assert np.array_equal(x, np.zeros(op.n))


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_warm_start_skips_converged_solves(backend):
    op, _ = make_operator()
    rng = np.random.default_rng(1)
    v = rng.standard_normal(op.n)
    rhs = op.apply(v)
    x = cg_solve(op, rhs, rtol=1e-12)
    iters, _, converged, _ = run_kernel(BACKENDS[backend], op, rhs, x0=x, rtol=1e-10)
    assert converged and iters == 0


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    op, _ = make_operator(12, 9)
    rng = np.random.default_rng(11)
    rhs = rng.standard_normal(op.n)
    solutions = [run_kernel(k, op, rhs, rtol=1e-12)[3] for k in BACKENDS.values()]
    assert np.allclose(solutions[0], solutions[1], rtol=0, atol=1e-10)


def test_dense_oracle_on_33x33_grid():
    op, mesh = make_operator(32, 32)
    xs, ys = mesh.vertices[:, 0], mesh.vertices[:, 1]
    rhs = np.sin(2 * np.pi * xs) * np.cos(np.pi * ys) + 0.3
    x = cg_solve(op, rhs, rtol=1e-12)
    dense = np.diag(op.diag_mass_over_tau) + op.stiffness.toarray()
    x_direct = np.linalg.solve(dense, rhs)
    assert np.abs(x - x_direct).max() <= 1e-8


def test_nonconvergence_reported_with_residual():
    op, _ = make_operator(16, 16)
    rng = np.random.default_rng(2)
    rhs = rng.standard_normal(op.n)
    with pytest.raises(ConvergenceError) as err:
        cg_solve(op, rhs, rtol=1e-14, max_iter=2)
    assert err.value.iterations == 2
    assert err.value.achieved_residual > 0


def test_input_validation():
    op, _ = make_operator(4, 4)
    with pytest.raises(ValueError, match="rtol"):
        cg_solve(op, np.zeros(op.n), rtol=2.0)
    with pytest.raises(ValueError, match="rhs"):
        cg_solve(op, np.zeros(3))
    with pytest.raises(ValueError, match="x0"):
        cg_solve(op, np.zeros(op.n), x0=np.zeros(3))
