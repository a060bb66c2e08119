import numpy as np
import pytest

from phasetrack.adjoint import (
    AdjointTrajectory,
    Observation,
    control_gradient,
    objective,
    observation_levels,
    solve_adjoint,
    steepest_descent_update,
    update_norm,
)
from phasetrack.forward import Control, StateTrajectory, solve_forward
from phasetrack.mesh import Field, Rectangle, build_mesh
from phasetrack.model import ModelParams, d2potential
from phasetrack.oracles import dense_operators

PARAMS = ModelParams(epsilon=0.1, tau=1e-3, T=5e-3)


def small_mesh(nx=8, ny=8, rect=Rectangle(0.0, 0.0, 1.0, 1.0)):
    return build_mesh(rect, nx, ny)


def blob(mesh, cx=0.4, cy=0.5, r=0.25):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return Field(mesh, np.tanh((r - np.hypot(x - cx, y - cy)) / (np.sqrt(2) * 0.1)))


def uniform_trajectory(mesh, value, params):
    states = [Field(mesh, np.full(mesh.n_vertices, value)) for _ in range(params.n_steps + 1)]
    return StateTrajectory(states, np.zeros(params.n_steps), np.zeros(params.n_steps, dtype=int), params)


def test_matched_observation_gives_zero_costates():
    mesh = small_mesh()
    phi0 = blob(mesh)
    traj = solve_forward(phi0, Control.zero(mesh, PARAMS.n_steps), PARAMS)
    obs = [Observation(PARAMS.T, traj.states[-1])]
    adj = solve_adjoint(traj, obs, PARAMS)
    for p in adj.costates:
        assert np.array_equal(p.values, np.zeros(mesh.n_vertices))


def test_uniform_backward_recurrence_factor():
    mesh = small_mesh(4, 4)
    traj = uniform_trajectory(mesh, 1.0, PARAMS)
    obs = [Observation(PARAMS.T, Field(mesh, np.full(mesh.n_vertices, 0.5)))]
    adj = solve_adjoint(traj, obs, PARAMS)
    # terminal residual 0.5 is constant, untouched by the diffusion solve
    assert np.abs(adj.costates[-1].values - 0.5).max() <= 1e-10
    factor = 1.0 - (PARAMS.tau / PARAMS.epsilon**2) * d2potential(1.0)
    assert factor == pytest.approx(0.8)
    for n in range(PARAMS.n_steps - 1, -1, -1):
        expected = 0.5 * factor ** (PARAMS.n_steps - n)
        assert np.abs(adj.costates[n].values - expected).max() <= 1e-9


def test_terminal_residual_is_exact():
    mesh = small_mesh()
    phi0 = blob(mesh)
    traj = solve_forward(phi0, Control.zero(mesh, PARAMS.n_steps), PARAMS)
    target = blob(mesh, cx=0.6)
    adj = solve_adjoint(traj, [Observation(PARAMS.T, target)], PARAMS)
    assert np.array_equal(
        adj.terminal_residual.values, traj.states[-1].values - target.values
    )


def dense_adjoint_chain(mesh, traj, residual, params):
    """Transpose-chain of the linearized forward operators, dense algebra."""
    stiff, lump = dense_operators(mesh)
    a_mat = np.diag(lump / params.tau) + stiff
    smooth = np.linalg.solve(a_mat, np.diag(lump / params.tau))  # S = A^{-1} M/tau
    costates = [None] * (params.n_steps + 1)
    carry = residual.copy()
    for n in range(params.n_steps, -1, -1):
        if n < params.n_steps:
            d = 1.0 - (params.tau / params.epsilon**2) * d2potential(
                traj.states[n].values
            )
            carry = d * costates[n + 1]
        costates[n] = smooth @ carry
    return costates


def test_costates_match_dense_linearization_chain():
    mesh = small_mesh()
    phi0 = blob(mesh)
    rng = np.random.default_rng(4)
    control = Control(
        [Field(mesh, 0.5 * rng.standard_normal(mesh.n_vertices)) for _ in range(5)]
    )
    traj = solve_forward(phi0, control, PARAMS, cg_rtol=1e-13)
    target = blob(mesh, cx=0.6)
    adj = solve_adjoint(traj, [Observation(PARAMS.T, target)], PARAMS, cg_rtol=1e-13)
    residual = traj.states[-1].values - target.values
    oracle = dense_adjoint_chain(mesh, traj, residual, PARAMS)
    for p, q in zip(adj.costates, oracle):
        assert np.abs(p.values - q).max() <= 1e-9


def test_objective_values():
    mesh = small_mesh(16, 12, Rectangle(0.0, 0.0, 8.0, 6.0))
    params = ModelParams(epsilon=0.1, tau=0.1, T=0.4)
    target = blob(mesh, cx=4.0, cy=3.0, r=1.0)

    # phi(T) = target exactly, no control: J = 0
    states = [target.copy() for _ in range(5)]
    traj = StateTrajectory(states, np.zeros(4), np.zeros(4, dtype=int), params)
    control = Control.zero(mesh, 4)
    J, fid, reg = objective(traj, control, [Observation(0.4, target)], params)
    assert J == 0.0 and fid == 0.0 and reg == 0.0

    # uniform misfit of 0.1 on a 48-unit domain: fidelity = 0.5 * 0.01 * 48
    shifted = Field(mesh, target.values + 0.1)
    traj = StateTrajectory([target.copy()] * 4 + [shifted], np.zeros(4), np.zeros(4, dtype=int), params)
    _, fid, _ = objective(traj, control, [Observation(0.4, target)], params)
    assert fid == pytest.approx(0.24, abs=1e-12)

    # unit control with theta=0.01 over T=0.4 on |Omega|=48: reg = 0.096
    ones_control = Control.constant(mesh, 4, 1.0)
    _, _, reg = objective(traj, ones_control, [Observation(0.4, target)], params)
    assert reg == pytest.approx(0.096, abs=1e-12)


def test_objective_rejects_offgrid_observation():
    mesh = small_mesh(4, 4)
    params = ModelParams(epsilon=0.1, tau=0.1, T=0.4)
    traj = uniform_trajectory(mesh, 1.0, params)
    control = Control.zero(mesh, params.n_steps)
    obs = [Observation(0.15, Field(mesh, np.ones(mesh.n_vertices)))]
    with pytest.raises(ValueError, match="multiple of tau"):
        objective(traj, control, obs, params)


def test_observation_levels_validation():
    mesh = small_mesh(4, 4)
    params = ModelParams(epsilon=0.1, tau=0.1, T=0.4)
    f = Field(mesh, np.ones(mesh.n_vertices))
    with pytest.raises(ValueError, match="final observation"):
        observation_levels([Observation(0.2, f)], params, mesh)
    with pytest.raises(ValueError, match="increasing"):
        observation_levels([Observation(0.4, f), Observation(0.4, f)], params, mesh)
    with pytest.raises(ValueError, match="beyond"):
        observation_levels([Observation(0.5, f)], params, mesh)
    with pytest.raises(ValueError, match="at least one"):
        observation_levels([], params, mesh)
    other = small_mesh(4, 4)
    with pytest.raises(ValueError, match="different mesh"):
        observation_levels([Observation(0.4, Field(other, np.ones(25)))], params, mesh)


def test_interior_observation_adds_jump():
    mesh = small_mesh()
    phi0 = blob(mesh)
    traj = solve_forward(phi0, Control.zero(mesh, PARAMS.n_steps), PARAMS)
    target_mid = blob(mesh, cx=0.45)
    target_end = blob(mesh, cx=0.55)
    obs = [Observation(3 * PARAMS.tau, target_mid), Observation(PARAMS.T, target_end)]
    adj = solve_adjoint(traj, obs, PARAMS)
    # below the interior observation the costate picks up the extra residual:
    # rebuild the level-3 solve by hand
    from phasetrack.forward import step_context

    ctx = step_context(mesh, PARAMS)
    p4 = adj.costates[4].values
    d3 = 1.0 - (PARAMS.tau / PARAMS.epsilon**2) * d2potential(traj.states[3].values)
    jump = traj.states[3].values - target_mid.values
    rhs = (mesh.lumped_mass / PARAMS.tau) * (d3 * p4 + jump)
    expected = ctx.solve(rhs, rtol=1e-12)
    assert np.abs(adj.costates[3].values - expected).max() <= 1e-9


def test_gradient_formula_edges():
    mesh = small_mesh(4, 4)
    control = Control.constant(mesh, PARAMS.n_steps, 2.0)
    zero_adj = AdjointTrajectory(
        [Field(mesh, np.zeros(mesh.n_vertices)) for _ in range(PARAMS.n_steps + 1)],
        Field(mesh, np.zeros(mesh.n_vertices)),
    )
    grad = control_gradient(control, zero_adj, PARAMS)
    for g in grad.slices:
        assert np.abs(g.values - PARAMS.theta * 2.0).max() <= 1e-15

    rng = np.random.default_rng(9)
    costates = [Field(mesh, rng.standard_normal(mesh.n_vertices)) for _ in range(6)]
    adj = AdjointTrajectory(costates, costates[-1])
    zero_control = Control.zero(mesh, 5)
    grad = control_gradient(zero_control, adj, PARAMS)
    scale = PARAMS.c_g / PARAMS.epsilon
    for n, g in enumerate(grad.slices):
        assert np.allclose(g.values, scale * costates[n + 1].values, atol=1e-14)


def test_update_and_norm():
    mesh = small_mesh(16, 12, Rectangle(0.0, 0.0, 8.0, 6.0))
    params = ModelParams(epsilon=0.1, tau=0.1, T=0.4)
    control = Control.constant(mesh, 4, 3.0)
    zero_grad = Control.zero(mesh, 4)
    updated = steepest_descent_update(control, zero_grad, 0.01)
    for s in updated.slices:
        assert np.array_equal(s.values, control.slices[0].values)

    ones_grad = Control.constant(mesh, 4, 1.0)
    norm = update_norm(ones_grad, 0.01, params)
    assert norm == pytest.approx(0.01 * np.sqrt(0.4 * 48.0), rel=1e-12)
    assert update_norm(ones_grad, 0.02, params) == pytest.approx(2 * norm, rel=1e-12)
    assert update_norm(zero_grad, 0.01, params) == 0.0


def test_pure_regularization_contracts_geometrically():
    mesh = small_mesh(4, 4)
    alpha = 0.01
    control = Control.constant(mesh, 3, 5.0)
    zero_adj = AdjointTrajectory(
        [Field(mesh, np.zeros(mesh.n_vertices)) for _ in range(4)],
        Field(mesh, np.zeros(mesh.n_vertices)),
    )
    current = control
    for k in range(1, 6):
        grad = control_gradient(current, zero_adj, PARAMS)
        current = steepest_descent_update(current, grad, alpha)
        expected = 5.0 * (1.0 - alpha * PARAMS.theta) ** k
        assert np.abs(current.slices[0].values - expected).max() <= 1e-12
