"""Time stepping for the forced phase-field state equation.

One step solves

    (M/tau + K) phi_new = (M/tau) phi_old - (1/eps^2) M g'(phi_old)
                          + (1/eps) M (c_g eta - lambda)

with lumped mass M, so diffusion is implicit and the nodal reaction explicit.
In the mass-constrained variant the spatially uniform multiplier lambda is
chosen each step so that the lumped positive-part mass hits its target; the
dependence of the new state on lambda is affine, phi(lambda) = phi_base -
lambda*u with (M/tau + K) u = (1/eps) M 1, so the whole secant iteration
costs one extra linear solve per trajectory plus vector updates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .linsolve import ConvergenceError, SpdOperator, cg_solve
from .mesh import Field, Mesh
from .model import MassTarget, ModelParams, dpotential, mass_target, positive_part_mass


class SolveError(RuntimeError):
    """A forward or adjoint sweep failed; carries the failing time index."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


@dataclass(eq=False)
class Control:
    """Space-time control: one field per forward step, slices 0 .. M-1."""

    slices: list

    def __post_init__(self):
        if not self.slices:
            raise ValueError("control needs at least one slice")
        mesh = self.slices[0].mesh
        if any(s.mesh is not mesh for s in self.slices):
            raise ValueError("control slices live on different meshes")

    @property
    def mesh(self) -> Mesh:
        return self.slices[0].mesh

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    def copy(self) -> "Control":
        return Control([s.copy() for s in self.slices])

    @classmethod
    def zero(cls, mesh: Mesh, n_slices: int) -> "Control":
        return cls([Field(mesh, np.zeros(mesh.n_vertices)) for _ in range(n_slices)])

    @classmethod
    def constant(cls, mesh: Mesh, n_slices: int, value: float) -> "Control":
        return cls(
            [Field(mesh, np.full(mesh.n_vertices, float(value))) for _ in range(n_slices)]
        )


@dataclass(eq=False)
class StateTrajectory:
    """States phi^0 .. phi^M plus per-step multipliers and secant iteration counts."""

    states: list
    multipliers: np.ndarray   # lambda^1 .. lambda^M, zeros when unconstrained
    secant_iters: np.ndarray  # per-step secant update counts
    params: ModelParams

    @property
    def mesh(self) -> Mesh:
        return self.states[0].mesh

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def times(self) -> np.ndarray:
        return self.params.tau * np.arange(len(self.states))

    def mass_series(self) -> np.ndarray:
        return np.array([positive_part_mass(s) for s in self.states])

    def mass_tracking_error(self, target: MassTarget) -> float:
        """max_n |positive-part mass(phi^n) - target(t_n)| over n >= 1."""
        masses = self.mass_series()
        times = self.times()
        errs = [
            abs(masses[n] - mass_target(target, times[n]))
            for n in range(1, len(masses))
        ]
        return max(errs)


class _StepContext:
    """Operator and cached constraint shift for one (mesh, params) pair."""

    def __init__(self, mesh: Mesh, params: ModelParams):
        self.mesh = mesh
        self.params = params
        self.op = SpdOperator(mesh.lumped_mass / params.tau, mesh.stiffness)
        self._shift = None

    def solve(self, rhs, x0=None, rtol=1e-10, max_iter=None):
        return cg_solve(self.op, rhs, x0=x0, rtol=rtol, max_iter=max_iter)

    def base_rhs(self, phi, eta):
        p = self.params
        m = self.mesh.lumped_mass
        return m * (
            phi / p.tau - dpotential(phi) / p.epsilon**2 + (p.c_g / p.epsilon) * eta
        )

    def constraint_shift(self, rtol=1e-10):
        """u with (M/tau + K) u = (1/eps) M 1; independent of the time level."""
        if self._shift is None:
            p = self.params
            rhs = self.mesh.lumped_mass / p.epsilon
            guess = np.full(self.mesh.n_vertices, p.tau / p.epsilon)
            self._shift = self.solve(rhs, x0=guess, rtol=min(rtol, 1e-12))
        return self._shift


@lru_cache(maxsize=8)
def _context(mesh: Mesh, params: ModelParams) -> _StepContext:
    return _StepContext(mesh, params)


def step_context(mesh: Mesh, params: ModelParams) -> _StepContext:
    return _context(mesh, params)


def forward_step_unconstrained(
    phi_n: Field, eta_n: Field, params: ModelParams, cg_rtol: float = 1e-10
) -> Field:
    """One unconstrained IMEX step (lambda = 0)."""
    if eta_n.mesh is not phi_n.mesh:
        raise ValueError("state and control live on different meshes")
    ctx = step_context(phi_n.mesh, params)
    new = ctx.solve(ctx.base_rhs(phi_n.values, eta_n.values), x0=phi_n.values, rtol=cg_rtol)
    return Field(phi_n.mesh, new)


def forward_step_constrained(
    phi_n: Field,
    eta_n: Field,
    params: ModelParams,
    target_mass: float,
    lambda_tol: float = 1e-8,
    max_secant: int = 60,
    cg_rtol: float = 1e-10,
):
    """One mass-constrained IMEX step.

    Returns (phi_new, lambda, secant_updates).  The multiplier is found by
    the secant iteration started from the bracket endpoints
    -2 eps/tau + 1 and 2 eps/tau - 1, with a bisection fallback whenever the
    secant denominator degenerates or the proposal leaves the bracket.
    """
    if eta_n.mesh is not phi_n.mesh:
        raise ValueError("state and control live on different meshes")
    mesh = phi_n.mesh
    if not 0.0 <= target_mass <= mesh.area * (1 + 1e-12):
        raise ValueError(
            f"target mass {target_mass} outside [0, area(domain) = {mesh.area}]"
        )
    ctx = step_context(mesh, params)
    phi_base = ctx.solve(
        ctx.base_rhs(phi_n.values, eta_n.values), x0=phi_n.values, rtol=cg_rtol
    )
    shift = ctx.constraint_shift(rtol=cg_rtol)

    lam, iters = _solve_multiplier(
        mesh.lumped_mass, phi_base, shift, target_mass, params, lambda_tol, max_secant
    )
    return Field(mesh, phi_base - lam * shift), lam, iters


def _solve_multiplier(m, phi_base, shift, target, params, lambda_tol, max_secant):
    """Root of mass(lam) = target for mass(lam) = sum m [phi_base - lam*shift]_+.

    mass is piecewise linear and non-increasing in lam (shift > 0), so the
    secant terminates finitely once two iterates land on the root's segment.
    """
    area_scale = max(1.0, float(np.sum(m)))
    mass_tol = 1e-12 * area_scale

    def mass_at(lam):
        return float(np.dot(m, np.maximum(phi_base - lam * shift, 0.0)))

    lam_prev = -2.0 * params.epsilon / params.tau + 1.0
    lam_cur = 2.0 * params.epsilon / params.tau - 1.0
    m_prev = mass_at(lam_prev)
    m_cur = mass_at(lam_cur)

    if not (m_prev >= target - mass_tol and m_cur <= target + mass_tol):
        raise ConvergenceError(
            f"target mass {target:.6g} not bracketed by the multiplier "
            f"initializers (mass range [{m_cur:.6g}, {m_prev:.6g}])"
        )
    if abs(m_prev - target) <= mass_tol:
        return lam_prev, 0
    if abs(m_cur - target) <= mass_tol:
        return lam_cur, 0

    # bracket [lo, hi] with mass(lo) >= target >= mass(hi)
    lo, hi = lam_prev, lam_cur
    for it in range(1, max_secant + 1):
        denom = m_cur - m_prev
        if denom != 0.0:
            lam_new = lam_cur + (lam_cur - lam_prev) * (target - m_cur) / denom
        else:
            lam_new = 0.5 * (lo + hi)
        if not lo < lam_new < hi:
            lam_new = 0.5 * (lo + hi)

        m_new = mass_at(lam_new)
        if m_new >= target:
            lo = lam_new
        if m_new <= target:
            hi = lam_new

        if abs(lam_new - lam_cur) < lambda_tol or abs(m_new - target) <= mass_tol:
            return lam_new, it
        lam_prev, m_prev = lam_cur, m_cur
        lam_cur, m_cur = lam_new, m_new

    raise ConvergenceError(
        f"multiplier secant did not converge within {max_secant} updates "
        f"(last |d lambda| = {abs(lam_cur - lam_prev):.3e})"
    )


def solve_forward(
    phi0: Field,
    control: Control,
    params: ModelParams,
    constraint: MassTarget | None = None,
    lambda_tol: float = 1e-8,
    max_secant: int = 60,
    cg_rtol: float = 1e-10,
) -> StateTrajectory:
    """March the state equation from phi^0 to phi^M with the given control.

    The full trajectory is kept in memory because the backward adjoint sweep
    needs every level.  Raises SolveError with the failing time index on any
    linear-solver or multiplier failure.
    """
    n_steps = params.n_steps
    if control.n_slices != n_steps:
        raise ValueError(
            f"control has {control.n_slices} slices, the time grid has {n_steps} steps"
        )
    if control.mesh is not phi0.mesh:
        raise ValueError("control and initial state live on different meshes")
    if params.tau > params.stable_tau:
        warnings.warn(
            f"tau = {params.tau:g} exceeds the explicit-reaction stability scale "
            f"eps^2/2 = {params.stable_tau:g}; expect degraded or unstable dynamics",
            stacklevel=2,
        )

    states = [phi0]
    multipliers = np.zeros(n_steps)
    secant_iters = np.zeros(n_steps, dtype=int)
    for n in range(n_steps):
        try:
            if constraint is None:
                nxt = forward_step_unconstrained(
                    states[-1], control.slices[n], params, cg_rtol=cg_rtol
                )
            else:
                target = mass_target(constraint, (n + 1) * params.tau)
                nxt, lam, its = forward_step_constrained(
                    states[-1],
                    control.slices[n],
                    params,
                    target,
                    lambda_tol=lambda_tol,
                    max_secant=max_secant,
                    cg_rtol=cg_rtol,
                )
                multipliers[n] = lam
                secant_iters[n] = its
        except (ConvergenceError, ValueError) as exc:
            raise SolveError(
                f"forward step {n} (t = {(n + 1) * params.tau:g}) failed: {exc}",
                time_index=n,
            ) from exc
        states.append(nxt)
    return StateTrajectory(states, multipliers, secant_iters, params)
