"""Tracking problem container: initial state, timed observations, parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

from .adjoint import observation_levels
from .mesh import Field, Mesh
from .model import MassTarget, ModelParams, positive_part_mass


@dataclass(eq=False)
class TrackingProblem:
    """One fitting problem: recover the forcing that carries phi0 to the observations."""

    mesh: Mesh
    phi0: Field
    observations: list
    params: ModelParams
    constrained: bool = True
    name: str = "custom"

    def __post_init__(self):
        if self.phi0.mesh is not self.mesh:
            raise ValueError("initial field lives on a different mesh")
        observation_levels(self.observations, self.params, self.mesh)

    @property
    def terminal_observation(self) -> Field:
        return self.observations[-1].field

    def build_mass_target(self) -> MassTarget:
        times = [0.0] + [o.time for o in self.observations]
        masses = [positive_part_mass(self.phi0)] + [
            positive_part_mass(o.field) for o in self.observations
        ]
        return MassTarget(tuple(times), tuple(masses))

    def constraint_or_none(self) -> MassTarget | None:
        return self.build_mass_target() if self.constrained else None
