"""SPD linear solves for the implicit part of every forward and adjoint step.

The operator (lumped_mass/tau + K) is fixed over a whole trajectory and well
conditioned for tau << 1, so Jacobi-preconditioned CG with warm starts from
the previous time level is the method of choice here; direct factorizations
and multigrid are out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kernels import cg_kernel


class ConvergenceError(RuntimeError):
    """Linear solve missed its residual contract within the iteration budget."""

    def __init__(self, message, iterations=None, achieved_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.achieved_residual = achieved_residual


@dataclass(eq=False)
class SpdOperator:
    """diag(mass/tau) + stiffness; SPD for any tau > 0."""

    diag_mass_over_tau: np.ndarray
    stiffness: sp.csr_matrix
    _inv_precond: np.ndarray = field(default=None, repr=False, init=False)

    def __post_init__(self):
        n = self.diag_mass_over_tau.shape[0]
        if self.stiffness.shape != (n, n):
            raise ValueError("operator diagonal and stiffness sizes disagree")
        if np.any(self.diag_mass_over_tau <= 0):
            raise ValueError("mass/tau diagonal must be positive")

    @property
    def n(self) -> int:
        return self.diag_mass_over_tau.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.diag_mass_over_tau * v + self.stiffness.dot(v)

    def inv_precond(self) -> np.ndarray:
        if self._inv_precond is None:
            self._inv_precond = 1.0 / (
                self.diag_mass_over_tau + self.stiffness.diagonal()
            )
        return self._inv_precond


def default_max_iter(n: int) -> int:
    return math.ceil(10.0 * math.sqrt(n))


def cg_solve(
    op: SpdOperator,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    rtol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Solve op x = rhs to ||op x - rhs|| <= rtol ||rhs||, warm-started from x0."""
    if not 0.0 < rtol < 1.0:
        raise ValueError(f"rtol must lie in (0, 1), got {rtol}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (op.n,):
        raise ValueError("rhs size does not match the operator")
    if max_iter is None:
        max_iter = default_max_iter(op.n)

    x = np.zeros(op.n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (op.n,):
        raise ValueError("x0 size does not match the operator")

    K = op.stiffness
    indptr = K.indptr.astype(np.int32, copy=False)
    indices = K.indices.astype(np.int32, copy=False)
    iters, relres, converged = cg_kernel(
        np.ascontiguousarray(op.diag_mass_over_tau),
        indptr,
        indices,
        np.ascontiguousarray(K.data, dtype=np.float64),
        np.ascontiguousarray(op.inv_precond()),
        np.ascontiguousarray(rhs),
        x,
        rtol,
        max_iter,
    )
    if not converged:
        raise ConvergenceError(
            f"CG stalled at relative residual {relres:.3e} after {iters} iterations "
            f"(requested rtol {rtol:.1e})",
            iterations=iters,
            achieved_residual=relres,
        )
    return x
