"""Double-well potential, model parameters and the mass-target machinery.

Only the smooth quartic potential ships; obstacle/logarithmic potentials are
deliberately unsupported because the backward (adjoint) problem needs two
derivatives of G.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Field


def potential(phi):
    """G(phi) = (phi^2 - 1)^2 / 4, minima at +-1."""
    return 0.25 * (np.square(phi) - 1.0) ** 2


def dpotential(phi):
    """G'(phi) = phi^3 - phi."""
    return phi**3 - phi


def d2potential(phi):
    """G''(phi) = 3 phi^2 - 1."""
    return 3.0 * np.square(phi) - 1.0


def compute_cg() -> float:
    """Scaling constant (1/sqrt(2)) * integral_{-1}^{1} sqrt(G(r)) dr.

    For the quartic well the integrand is (1 - r^2)/2, so the closed form is
    sqrt(2)/3; the test suite cross-checks this against adaptive quadrature.
    """
    return math.sqrt(2.0) / 3.0


@dataclass(frozen=True)
class ModelParams:
    """Interface width, time grid and regularization weight for one problem.

    n_steps is derived from T and tau and must reproduce T exactly (to a
    1e-12 relative slack) so the observation times land on the grid.
    """

    epsilon: float
    tau: float
    T: float
    theta: float = 0.01
    c_g: float = field(default_factory=compute_cg)

    def __post_init__(self):
        for name in ("epsilon", "tau", "T", "theta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ModelParams.{name} must be positive")
        n = round(self.T / self.tau)
        if n < 1 or abs(n * self.tau - self.T) > 1e-12 * max(self.T, 1.0):
            raise ValueError(
                f"T = {self.T} is not an integer multiple of tau = {self.tau}"
            )

    @property
    def n_steps(self) -> int:
        return round(self.T / self.tau)

    @property
    def stable_tau(self) -> float:
        """Stability scale of the explicit reaction term."""
        return 0.5 * self.epsilon**2


def positive_part_mass(f: Field) -> float:
    """Lumped quadrature of [phi]_+ : sum_i m_i max(phi_i, 0).

    Equals the exact integral of the P1 interpolant of the clipped nodal
    values, which keeps the mass affine (piecewise-linear) in the uniform
    multiplier during the per-step secant iteration.
    """
    return float(np.dot(f.mesh.lumped_mass, np.maximum(f.values, 0.0)))


@dataclass(frozen=True)
class MassTarget:
    """Piecewise-linear-in-time target for the positive-part mass.

    times starts at 0 with the initial mass and ends at T with the final
    observed mass; with intermediate observations it passes through each
    observed mass in order.
    """

    times: tuple
    masses: tuple

    def __post_init__(self):
        if len(self.times) != len(self.masses) or len(self.times) < 2:
            raise ValueError("MassTarget needs matching times/masses, length >= 2")
        if self.times[0] != 0.0:
            raise ValueError("MassTarget must start at t = 0")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ValueError("MassTarget times must be strictly increasing")

    @classmethod
    def from_endpoints(cls, m0: float, m_obs: float, T: float) -> "MassTarget":
        return cls((0.0, T), (float(m0), float(m_obs)))

    @property
    def T(self) -> float:
        return self.times[-1]


def mass_target(mt: MassTarget, t: float) -> float:
    """Target mass at time t, affine between the anchor times."""
    if t < -1e-12 or t > mt.T * (1 + 1e-12):
        raise ValueError(f"time {t} outside [0, {mt.T}]")
    return float(np.interp(t, mt.times, mt.masses))
