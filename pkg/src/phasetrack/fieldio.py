"""Plain-text field files (PHF1): inspectable and bit-exact on round trip.

Layout:
    PHF1
    nx ny x0 y0 x1 y1
    epsilon time
    <(nx+1)*(ny+1) nodal values, row-major, one per line>

Floats are written with 17 significant digits, which reparses to identical
doubles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Field, Mesh, Rectangle, build_mesh

MAGIC = "PHF1"


@dataclass(frozen=True)
class FieldMeta:
    rect: Rectangle
    nx: int
    ny: int
    epsilon: float
    time: float


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_field(path, f: Field, epsilon: float, time: float) -> None:
    mesh = f.mesh
    r = mesh.rect
    lines = [
        MAGIC,
        f"{mesh.nx} {mesh.ny} {_fmt(r.x0)} {_fmt(r.y0)} {_fmt(r.x1)} {_fmt(r.y1)}",
        f"{_fmt(epsilon)} {_fmt(time)}",
    ]
    lines.extend(_fmt(v) for v in f.values)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_field(path, mesh: Mesh | None = None):
    """Read a PHF1 file; returns (Field, FieldMeta).

    When a mesh is supplied the header must match it exactly and the field is
    attached to that mesh object; otherwise a fresh mesh is built.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC} field file")
    try:
        head = lines[1].split()
        nx, ny = int(head[0]), int(head[1])
        x0, y0, x1, y1 = (float(v) for v in head[2:6])
        epsilon, time = (float(v) for v in lines[2].split())
    except (IndexError, ValueError):
        raise ValueError(f"{path}: malformed {MAGIC} header") from None

    rect = Rectangle(x0, y0, x1, y1)
    count = (nx + 1) * (ny + 1)
    raw = [ln for ln in lines[3:] if ln.strip()]
    if len(raw) != count:
        raise ValueError(f"{path}: expected {count} values, found {len(raw)}")
    values = np.array([float(v) for v in raw])

    if mesh is None:
        mesh = build_mesh(rect, nx, ny)
    else:
        same = (
            mesh.nx == nx
            and mesh.ny == ny
            and (mesh.rect.x0, mesh.rect.y0, mesh.rect.x1, mesh.rect.y1)
            == (x0, y0, x1, y1)
        )
        if not same:
            raise ValueError(f"{path}: header does not match the supplied mesh")
    return Field(mesh, values), FieldMeta(rect, nx, ny, epsilon, time)
