"""Post-processing: zero level-sets, enclosed areas, centroids, control extrema.

Contours come from marching the triangulation: every triangle whose nodal
values change sign contributes one segment, oriented so the positive phase
lies to its left.  Stitched loops are then counterclockwise around positive
regions and clockwise around holes, so summing signed shoelace areas yields
the area of {phi > 0} with holes subtracted automatically.  The loop count
doubles as a cheap topology indicator for multi-cell runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import Control
from .mesh import Field
from .model import positive_part_mass


@dataclass(eq=False)
class Contour:
    """Closed zero level-set loops (first point repeated at the end)."""

    loops: list
    open_chains: list = field(default_factory=list)
    time: float | None = None

    @property
    def loop_count(self) -> int:
        return len(self.loops)


def extract_zero_levelset(f: Field, time: float | None = None) -> Contour:
    """Marching-triangles contour of the nodal zero level."""
    mesh = f.mesh
    values = f.values.copy()
    values[values == 0.0] = 1e-14  # deterministic tie-break for exact zeros

    tri = mesh.triangles
    tv = values[tri]
    pos = tv > 0.0
    n_pos = pos.sum(axis=1)
    mixed = np.flatnonzero((n_pos == 1) | (n_pos == 2))
    if mixed.size == 0:
        return Contour([], [], time)

    verts = mesh.vertices
    crossings: dict = {}

    def crossing(a: int, b: int):
        key = (a, b) if a < b else (b, a)
        pt = crossings.get(key)
        if pt is None:
            va, vb = values[key[0]], values[key[1]]
            t = va / (va - vb)
            pa, pb = verts[key[0]], verts[key[1]]
            pt = (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))
            crossings[key] = pt
        return key, pt

    # directed segments: start/end edge keys with positive phase on the left
    starts = []
    ends = []
    for t_idx in mixed:
        ids = tri[t_idx]
        lone_positive = n_pos[t_idx] == 1
        lone = int(np.argmax(pos[t_idx])) if lone_positive else int(np.argmax(~pos[t_idx]))
        nxt, prv = (lone + 1) % 3, (lone + 2) % 3
        e_a, _ = crossing(ids[lone], ids[nxt])   # edge lone -> next (ccw)
        e_b, _ = crossing(ids[prv], ids[lone])   # edge prev -> lone
        if lone_positive:
            starts.append(e_a)
            ends.append(e_b)
        else:
            starts.append(e_b)
            ends.append(e_a)

    seg_by_start = {key: i for i, key in enumerate(starts)}
    seg_by_end = {key: i for i, key in enumerate(ends)}

    visited = np.zeros(len(starts), dtype=bool)
    loops, chains = [], []
    for first in range(len(starts)):
        if visited[first]:
            continue
        seq = [first]
        visited[first] = True
        closed = False
        cur = first
        while True:
            nxt = seg_by_start.get(ends[cur])
            if nxt == first:
                closed = True
                break
            if nxt is None or visited[nxt]:
                break
            seq.append(nxt)
            visited[nxt] = True
            cur = nxt
        if not closed:  # rewind to the chain head (boundary-touching interface)
            cur = first
            while True:
                prv = seg_by_end.get(starts[cur])
                if prv is None or visited[prv]:
                    break
                seq.insert(0, prv)
                visited[prv] = True
                cur = prv
        points = [crossings[starts[i]] for i in seq]
        if closed:
            points.append(points[0])
            loops.append(np.array(points))
        else:
            points.append(crossings[ends[seq[-1]]])
            chains.append(np.array(points))
    return Contour(loops, chains, time)


def _signed_loop_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def enclosed_area(contour: Contour) -> float:
    """Area of the positive phase bounded by the loops, holes subtracted."""
    return sum(_signed_loop_area(loop) for loop in contour.loops)


def mass_area(f: Field) -> float:
    """Positive-part-mass surrogate for the enclosed area."""
    return positive_part_mass(f)


def centroid(f: Field):
    """Positive-part-mass weighted centroid; robust across topology changes."""
    weights = f.mesh.lumped_mass * np.maximum(f.values, 0.0)
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("centroid undefined: positive-part mass is zero")
    return (
        float(weights @ f.mesh.vertices[:, 0] / total),
        float(weights @ f.mesh.vertices[:, 1] / total),
    )


def centroid_speed(times, points) -> np.ndarray:
    """Speeds along a centroid series: central differences, one-sided at the ends."""
    times = np.asarray(times, dtype=float)
    pts = np.asarray(points, dtype=float)
    if len(times) != len(pts) or len(times) < 2:
        raise ValueError("need matching times/points series of length >= 2")
    vx = np.gradient(pts[:, 0], times)
    vy = np.gradient(pts[:, 1], times)
    return np.hypot(vx, vy)


def control_extrema(control: Control):
    """Per-slice (min, max) nodal control values."""
    mins = np.array([s.values.min() for s in control.slices])
    maxs = np.array([s.values.max() for s in control.slices])
    return mins, maxs


def fidelity_history(report) -> np.ndarray:
    """Per-iteration misfit norm ||phi(T) - phi_obs||, i.e. sqrt(2 * fidelity)."""
    if not report.records:
        raise ValueError("empty optimization report")
    return np.sqrt(2.0 * np.asarray(report.fidelities()))
