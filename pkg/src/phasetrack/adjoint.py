"""Backward adjoint sweep, objective evaluation and the control gradient.

The costate recursion is the exact discrete adjoint of the IMEX forward step:
every backward level applies the same implicit-diffusion solve, and each
observation residual (the terminal one included) enters through that solve,

    (M/tau + K) p^n = (M/tau) [p^{n+1} - (tau/eps^2) g''(phi^n) p^{n+1} + r_n],

with r_n the residual when level n carries an observation and zero otherwise.
Pairing control slice n with p^{n+1} then reproduces finite differences of
the discrete objective to solver precision, which is the keystone
correctness check of the whole package.  The raw terminal residual
phi^M - phi_obs is kept alongside the costates (terminal_residual); the
stored costate at level M is its diffusion-smoothed image, which is what the
chain rule actually pairs with the final control slice.

The mass-constraint multiplier never enters the adjoint problem, so
constrained state solves reuse this unconstrained-form sweep unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import Control, SolveError, StateTrajectory, step_context
from .linsolve import ConvergenceError
from .mesh import Field, Mesh, lumped_inner
from .model import ModelParams, d2potential


@dataclass(frozen=True)
class Observation:
    """A target field observed at one time on the grid (a multiple of tau)."""

    time: float
    field: Field


@dataclass(eq=False)
class AdjointTrajectory:
    """Costates p^0 .. p^M plus the raw terminal residual phi^M - phi_obs."""

    costates: list
    terminal_residual: Field

    @property
    def mesh(self) -> Mesh:
        return self.costates[0].mesh

    @property
    def n_steps(self) -> int:
        return len(self.costates) - 1


def observation_levels(observations, params: ModelParams, mesh: Mesh) -> dict:
    """Validated map time-level -> observed Field.

    Times must be strictly increasing multiples of tau in (0, T], with the
    final observation exactly at T.
    """
    if not observations:
        raise ValueError("at least one observation is required")
    levels = {}
    last_level = 0
    for obs in observations:
        t, f = obs.time, obs.field
        if f.mesh is not mesh:
            raise ValueError("observation field lives on a different mesh")
        level = round(t / params.tau)
        if abs(level * params.tau - t) > 1e-9 * max(t, params.tau):
            raise ValueError(
                f"observation time {t} is not a multiple of tau = {params.tau}"
            )
        if level <= last_level:
            raise ValueError("observation times must be strictly increasing")
        if level > params.n_steps:
            raise ValueError(f"observation time {t} lies beyond T = {params.T}")
        levels[level] = f
        last_level = level
    if params.n_steps not in levels:
        raise ValueError(f"the final observation must sit at T = {params.T}")
    return levels


def solve_adjoint(
    trajectory: StateTrajectory,
    observations,
    params: ModelParams,
    cg_rtol: float = 1e-10,
) -> AdjointTrajectory:
    """Sweep the adjoint equation backward along a computed state trajectory."""
    mesh = trajectory.mesh
    levels = observation_levels(observations, params, mesh)
    n_steps = trajectory.n_steps
    if n_steps != params.n_steps:
        raise ValueError("trajectory and params disagree on the number of steps")

    ctx = step_context(mesh, params)
    mass = mesh.lumped_mass
    tau, eps2 = params.tau, params.epsilon**2

    residual_m = trajectory.states[n_steps].values - levels[n_steps].values
    costates: list = [None] * (n_steps + 1)
    carry = np.zeros(mesh.n_vertices)
    for n in range(n_steps, -1, -1):
        if n < n_steps:
            p_next = costates[n + 1].values
            carry = p_next - (tau / eps2) * d2potential(
                trajectory.states[n].values
            ) * p_next
        if n in levels:
            carry = carry + (trajectory.states[n].values - levels[n].values)
        try:
            solved = ctx.solve(
                (mass / tau) * carry,
                x0=carry if n == n_steps else costates[n + 1].values,
                rtol=cg_rtol,
            )
        except ConvergenceError as exc:
            raise SolveError(
                f"adjoint step {n} (t = {n * params.tau:g}) failed: {exc}",
                time_index=n,
            ) from exc
        costates[n] = Field(mesh, solved)
    return AdjointTrajectory(costates, Field(mesh, residual_m))


def objective(
    trajectory: StateTrajectory, control: Control, observations, params: ModelParams
):
    """(J, fidelity, regularization) of a state trajectory and its control.

    fidelity sums 0.5 ||phi(t_obs) - phi_obs||^2 over the observations;
    regularization is (theta/2) * tau * sum_n ||eta^n||^2, a left-endpoint
    quadrature matching the control living on [0, T).
    """
    mesh = trajectory.mesh
    levels = observation_levels(observations, params, mesh)
    fidelity = 0.0
    for level, obs_field in levels.items():
        diff = Field(mesh, trajectory.states[level].values - obs_field.values)
        fidelity += 0.5 * lumped_inner(mesh, diff, diff)
    reg = 0.0
    for eta in control.slices:
        reg += lumped_inner(mesh, eta, eta)
    reg *= 0.5 * params.theta * params.tau
    return fidelity + reg, fidelity, reg


def control_gradient(
    control: Control, adjoint: AdjointTrajectory, params: ModelParams
) -> Control:
    """Riesz gradient of the reduced objective: slice n is theta eta^n + (c_g/eps) p^{n+1}."""
    if adjoint.n_steps != control.n_slices:
        raise ValueError("control and adjoint trajectory sizes disagree")
    mesh = control.mesh
    scale = params.c_g / params.epsilon
    slices = [
        Field(mesh, params.theta * eta.values + scale * adjoint.costates[n + 1].values)
        for n, eta in enumerate(control.slices)
    ]
    return Control(slices)


def steepest_descent_update(control: Control, grad: Control, alpha: float) -> Control:
    """eta <- eta - alpha * grad, slice-wise."""
    if grad.n_slices != control.n_slices:
        raise ValueError("control and gradient sizes disagree")
    mesh = control.mesh
    return Control(
        [
            Field(mesh, eta.values - alpha * g.values)
            for eta, g in zip(control.slices, grad.slices)
        ]
    )


def update_norm(grad: Control, alpha: float, params: ModelParams) -> float:
    """alpha * ||grad|| in the discrete L2(Omega x [0, T)) norm."""
    mesh = grad.mesh
    acc = 0.0
    for g in grad.slices:
        acc += lumped_inner(mesh, g, g)
    return alpha * math.sqrt(params.tau * acc)
