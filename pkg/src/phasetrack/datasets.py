"""Built-in synthetic tracking problems and initial-control construction.

Grids default to the square-cell tensor mesh closest to 8321 vertices on each
domain (the exact counts are grid-dependent and reported by the CLI); tests
and desk runs pass coarser nx/ny.
"""

from __future__ import annotations

from .forward import Control, forward_step_constrained, forward_step_unconstrained
from .geometry import (
    ImplicitCurve,
    indicator_field,
    smooth_indicator,
    smoothing_params,
)
from .mesh import (
    Field,
    Rectangle,
    build_mesh,
    triangle_gradients,
    vertex_average_of_triangle_values,
)
from .model import ModelParams, mass_target
from .adjoint import Observation
from .problem import TrackingProblem

_PAIR_CURVES = {
    "initial": (
        ImplicitCurve(cx=0.0, cy=0.0, radius=0.8, amp_x=0.1, freq_x=4.0, amp_y=0.1, freq_y=3.0),
        ImplicitCurve(cx=2.0, cy=0.6, radius=0.7, x_scale=2.0, amp_x=0.1, freq_x=2.5, amp_y=0.3, freq_y=2.0),
    ),
    "target": (
        ImplicitCurve(cx=0.4, cy=0.5, radius=0.8, amp_x=0.1, freq_x=6.0, amp_y=0.1, freq_y=7.0),
        ImplicitCurve(cx=2.5, cy=1.0, radius=0.7, x_scale=2.0, amp_x=0.1, freq_x=3.5, amp_y=0.1, freq_y=1.5),
    ),
}

_SPLIT_CURVES = {
    "initial": (
        ImplicitCurve(cx=0.0, cy=0.0, radius=0.9, amp_x=0.1, freq_x=4.5, amp_y=0.11, freq_y=3.0),
        ImplicitCurve(cx=5.0, cy=0.0, radius=0.7, amp_x=0.1, freq_x=2.5, amp_y=0.3, freq_y=2.0),
    ),
    "target": (
        ImplicitCurve(cx=0.35, cy=0.7, radius=0.8, amp_x=0.1, freq_x=6.0, amp_y=0.1, freq_y=7.0),
        ImplicitCurve(cx=0.3, cy=1.1, radius=0.7, amp_x=-0.1, freq_x=3.5, amp_y=0.1, freq_y=1.5),
    ),
}

# Stand-in single-cell pair at migrating-cell scale: generated in-repo, not
# derived from segmented microscopy data.
_CELL_LIKE_CURVES = {
    "initial": (
        ImplicitCurve(cx=2.8 / 1.2, cy=3.1, radius=1.0, x_scale=1.2, amp_x=0.15, freq_x=2.0, amp_y=0.1, freq_y=3.0),
    ),
    "target": (
        ImplicitCurve(cx=4.2, cy=2.7, radius=0.95, x_scale=1.1, amp_x=0.12, freq_x=2.5, amp_y=0.1, freq_y=2.0),
    ),
}

_DATASETS = {
    "translated_circle": dict(
        rect=Rectangle(-3.0, -3.0, 6.0, 3.0),
        grid=(111, 74),
        T=0.8,
        initial=(ImplicitCurve.circle(0.0, 0.0, 1.0),),
        target=(ImplicitCurve.circle(3.0, 0.0, 1.0),),
        control="zero",
    ),
    "multicell_pair": dict(
        rect=Rectangle(-2.0, -2.0, 8.0, 2.0),
        grid=(140, 56),
        T=0.4,
        initial=_PAIR_CURVES["initial"],
        target=_PAIR_CURVES["target"],
        control="constant:1",
    ),
    "multicell_split": dict(
        rect=Rectangle(-2.0, -2.5, 6.3, 2.5),
        grid=(116, 70),
        T=0.4,
        initial=_SPLIT_CURVES["initial"],
        target=_SPLIT_CURVES["target"],
        control="constant:1",
    ),
    "synthetic_cell_like": dict(
        rect=Rectangle(0.0, 0.0, 8.0, 6.0),
        grid=(104, 78),
        T=0.4,
        initial=_CELL_LIKE_CURVES["initial"],
        target=_CELL_LIKE_CURVES["target"],
        control="zero",
    ),
}

DATASET_NAMES = tuple(sorted(_DATASETS))


def dataset_spec(name: str) -> dict:
    try:
        return _DATASETS[name]
    except KeyError:
        raise ValueError(
            f"unknown dataset {name!r}; choose from {', '.join(DATASET_NAMES)}"
        ) from None


def default_control_mode(name: str) -> str:
    return dataset_spec(name)["control"]


def builtin_dataset(
    name: str,
    nx: int | None = None,
    ny: int | None = None,
    epsilon: float = 0.1,
    tau: float = 1e-3,
    T: float | None = None,
    theta: float = 0.01,
    constrained: bool = True,
    smoothing_steps: int = 10,
) -> TrackingProblem:
    """Assemble a named synthetic problem on its domain.

    Indicators are relaxed with a few stability-respecting solver steps to
    establish the interface layer before anything is observed or tracked.
    """
    spec = dataset_spec(name)
    rect = spec["rect"]
    gx, gy = spec["grid"]
    mesh = build_mesh(rect, nx if nx is not None else gx, ny if ny is not None else gy)
    params = ModelParams(
        epsilon=epsilon, tau=tau, T=T if T is not None else spec["T"], theta=theta
    )
    smooth = smoothing_params(params)
    phi0 = smooth_indicator(indicator_field(mesh, spec["initial"]), smooth, smoothing_steps)
    phi_obs = smooth_indicator(indicator_field(mesh, spec["target"]), smooth, smoothing_steps)
    return TrackingProblem(
        mesh=mesh,
        phi0=phi0,
        observations=[Observation(params.T, phi_obs)],
        params=params,
        constrained=constrained,
        name=name,
    )


def parse_control_mode(text: str):
    """Parse 'zero' | 'constant:<v>' | 'feedback:<cx>,<cy>' into a mode tuple."""
    text = text.strip()
    if text == "zero":
        return ("zero",)
    kind, _, arg = text.partition(":")
    if kind == "constant":
        try:
            return ("constant", float(arg))
        except ValueError:
            raise ValueError(f"bad constant control value {arg!r}") from None
    if kind == "feedback":
        parts = arg.split(",")
        if len(parts) != 2:
            raise ValueError(f"feedback control needs 'feedback:cx,cy', got {text!r}")
        return ("feedback", (float(parts[0]), float(parts[1])))
    raise ValueError(f"unknown initial-control mode {text!r}")


def make_initial_control(
    mode,
    problem: TrackingProblem,
    lambda_tol: float = 1e-8,
    max_secant: int = 60,
    cg_rtol: float = 1e-10,
) -> Control:
    """Build the optimizer's starting control.

    zero / constant fill every slice uniformly.  feedback runs one forward
    pass of the problem (honoring its constraint mode), setting each slice to
    the lumped vertex projection of c . grad(phi) before stepping with it;
    the recorded slices form a fixed open-loop control.
    """
    if isinstance(mode, str):
        mode = parse_control_mode(mode)
    params = problem.params
    mesh = problem.mesh
    n = params.n_steps
    kind = mode[0]
    if kind == "zero":
        return Control.zero(mesh, n)
    if kind == "constant":
        return Control.constant(mesh, n, mode[1])
    if kind != "feedback":
        raise ValueError(f"unknown initial-control mode {mode!r}")

    cx, cy = mode[1]
    target = problem.build_mass_target() if problem.constrained else None
    phi = problem.phi0
    slices = []
    for step in range(n):
        grads = triangle_gradients(mesh, phi.values)
        eta = Field(
            mesh,
            vertex_average_of_triangle_values(mesh, cx * grads[:, 0] + cy * grads[:, 1]),
        )
        slices.append(eta)
        if target is None:
            phi = forward_step_unconstrained(phi, eta, params, cg_rtol=cg_rtol)
        else:
            phi, _, _ = forward_step_constrained(
                phi,
                eta,
                params,
                mass_target(target, (step + 1) * params.tau),
                lambda_tol=lambda_tol,
                max_secant=max_secant,
                cg_rtol=cg_rtol,
            )
    return Control(slices)
