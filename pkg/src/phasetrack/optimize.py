"""Steepest-descent optimization loop with the three termination criteria."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .adjoint import (
    control_gradient,
    objective,
    solve_adjoint,
    steepest_descent_update,
    update_norm,
)
from .forward import Control, SolveError, solve_forward
from .problem import TrackingProblem

J_BELOW_TOL = "J_below_tol"
UPDATE_BELOW_TOL = "update_below_tol"
MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class OptimizationConfig:
    """Step size, stopping tolerances and the iteration cap."""

    alpha: float = 0.01
    tol_J: float = 1e-4
    tol_eta: float = 1e-4
    K_max: int = 3500

    def __post_init__(self):
        for name in ("alpha", "tol_J", "tol_eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OptimizationConfig.{name} must be positive")
        if self.K_max < 1:
            raise ValueError("OptimizationConfig.K_max must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    J: float
    fidelity: float
    regularization: float
    update_norm: float
    wall_time: float


@dataclass(eq=False)
class OptimizationReport:
    records: list = field(default_factory=list)
    termination_cause: str | None = None

    def fidelities(self):
        return [r.fidelity for r in self.records]

    def costs(self):
        return [r.J for r in self.records]

    @property
    def n_iterations(self) -> int:
        return len(self.records)


class TrackingAborted(RuntimeError):
    """Optimization stopped on a solver failure; carries the partial report."""

    def __init__(self, message, report: OptimizationReport):
        super().__init__(message)
        self.report = report


def run_tracking(
    problem: TrackingProblem,
    config: OptimizationConfig,
    initial_control: Control,
    lambda_tol: float = 1e-8,
    max_secant: int = 60,
    cg_rtol: float = 1e-10,
    progress=None,
):
    """Optimize the control for a tracking problem by steepest descent.

    Each iteration solves the (possibly mass-constrained) state equation,
    evaluates the objective, sweeps the unconstrained-form adjoint, and
    updates the control.  Stops when J < tol_J, when the update norm
    alpha*||theta eta + (c_g/eps) p|| falls below tol_eta, or at K_max
    iterations; the returned control/trajectory always belong to the last
    *evaluated* iterate.  Returns (control, trajectory, report).
    """
    params = problem.params
    constraint = problem.constraint_or_none()
    report = OptimizationReport()
    control = initial_control
    start = time.perf_counter()

    for k in range(config.K_max):
        try:
            trajectory = solve_forward(
                problem.phi0,
                control,
                params,
                constraint=constraint,
                lambda_tol=lambda_tol,
                max_secant=max_secant,
                cg_rtol=cg_rtol,
            )
            J, fidelity, reg = objective(
                trajectory, control, problem.observations, params
            )
            adj = solve_adjoint(trajectory, problem.observations, params, cg_rtol=cg_rtol)
            grad = control_gradient(control, adj, params)
        except SolveError as exc:
            report.termination_cause = f"aborted_at_iteration_{k}"
            raise TrackingAborted(str(exc), report) from exc

        unorm = update_norm(grad, config.alpha, params)
        report.records.append(
            IterationRecord(k, J, fidelity, reg, unorm, time.perf_counter() - start)
        )
        if progress is not None:
            progress(report.records[-1])

        if J < config.tol_J:
            report.termination_cause = J_BELOW_TOL
            break
        if unorm < config.tol_eta:
            report.termination_cause = UPDATE_BELOW_TOL
            break
        if k == config.K_max - 1:
            report.termination_cause = MAX_ITERS
            break
        control = steepest_descent_update(control, grad, config.alpha)

    return control, trajectory, report
