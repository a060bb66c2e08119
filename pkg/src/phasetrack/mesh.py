"""Structured P1 triangulation of a rectangle and the operators built on it.

Every cell of an nx-by-ny partition is split along the same diagonal
(lower-left to upper-right), giving 2*nx*ny right triangles.  Assembly
produces the CSR stiffness matrix and the lumped (row-sum) mass vector; the
consistent mass matrix is never formed, so nonlinear nodal terms stay
diagonal.  Homogeneous Neumann conditions are the natural ones for this
stiffness matrix and no boundary rows are modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned domain [x0, x1] x [y0, y1] in model units."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(
                f"degenerate rectangle: [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(eq=False)
class Mesh:
    """Immutable triangulation plus assembled P1 operators.

    vertices are ordered row-major with x varying fastest: vertex (ix, iy)
    has index iy*(nx+1) + ix.  Safe to share across threads once built.
    """

    rect: Rectangle
    nx: int
    ny: int
    vertices: np.ndarray      # (n_vertices, 2)
    triangles: np.ndarray     # (n_triangles, 3) int32
    stiffness: sp.csr_matrix  # (n_vertices, n_vertices)
    lumped_mass: np.ndarray   # (n_vertices,)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def area(self) -> float:
        return self.rect.area

    def vertex_index(self, ix: int, iy: int) -> int:
        return iy * (self.nx + 1) + ix


@dataclass(eq=False)
class Field:
    """Nodal coefficient vector of a P1 function on a mesh."""

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"field has {values.shape} values for a mesh with "
                f"{self.mesh.n_vertices} vertices"
            )
        if not np.isfinite(values).all():
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def copy(self) -> "Field":
        return Field(self.mesh, self.values.copy())


def build_mesh(rect: Rectangle, nx: int, ny: int) -> Mesh:
    """Triangulate rect into 2*nx*ny right triangles and assemble operators.

    The stiffness matrix comes from exact per-triangle gradients of the P1
    hat functions; the lumped mass assigns each vertex one third of the area
    of every adjacent triangle (equal to the consistent-mass row sums).
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")

    x = np.linspace(rect.x0, rect.x1, nx + 1)
    y = np.linspace(rect.y0, rect.y1, ny + 1)
    X, Y = np.meshgrid(x, y)  # (ny+1, nx+1), x fastest when raveled
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((nx + 1) * (ny + 1), dtype=np.int32).reshape(ny + 1, nx + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()

    triangles = np.empty((2 * nx * ny, 3), dtype=np.int32)
    triangles[0::2] = np.column_stack([v00, v10, v11])  # below the diagonal
    triangles[1::2] = np.column_stack([v00, v11, v01])  # above the diagonal

    stiffness, lumped = _assemble(vertices, triangles)
    return Mesh(rect, nx, ny, vertices, triangles, stiffness, lumped)


def _assemble(vertices, triangles):
    xv = vertices[triangles, 0]  # (T, 3)
    yv = vertices[triangles, 1]

    # b_i = y_{i+1} - y_{i+2}, c_i = x_{i+2} - x_{i+1} (cyclic), grad(hat_i) = (b_i, c_i)/(2A)
    b = yv[:, [1, 2, 0]] - yv[:, [2, 0, 1]]
    c = xv[:, [2, 0, 1]] - xv[:, [1, 2, 0]]
    area2 = (xv[:, 1] - xv[:, 0]) * (yv[:, 2] - yv[:, 0]) - (
        xv[:, 2] - xv[:, 0]
    ) * (yv[:, 1] - yv[:, 0])
    if np.any(area2 <= 0):
        raise ValueError("triangulation produced non-positive triangle areas")

    coeff = 1.0 / (2.0 * area2)  # (b_i b_j + c_i c_j) / (4A) with A = area2 / 2
    k_local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) * coeff[
        :, None, None
    ]

    n = vertices.shape[0]
    rows = np.broadcast_to(triangles[:, :, None], k_local.shape)
    cols = np.broadcast_to(triangles[:, None, :], k_local.shape)
    stiffness = sp.coo_matrix(
        (k_local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
    stiffness.sort_indices()
    stiffness.indices = stiffness.indices.astype(np.int32, copy=False)
    stiffness.indptr = stiffness.indptr.astype(np.int32, copy=False)

    tri_area = 0.5 * area2
    lumped = np.bincount(
        triangles.ravel(), weights=np.repeat(tri_area / 3.0, 3), minlength=n
    )
    return stiffness, lumped


def interpolate(mesh: Mesh, f) -> Field:
    """Nodal (Lagrange) interpolant of a pointwise function f(x, y)."""
    xs, ys = mesh.vertices[:, 0], mesh.vertices[:, 1]
    try:
        values = np.asarray(f(xs, ys), dtype=np.float64)
        if values.shape != xs.shape:
            raise TypeError
    except Exception:
        values = np.array([f(px, py) for px, py in mesh.vertices], dtype=np.float64)
    return Field(mesh, values)


def lumped_inner(mesh: Mesh, a: Field, b: Field) -> float:
    """Discrete L2 pairing sum_i m_i a_i b_i with the lumped mass weights."""
    if a.mesh is not mesh or b.mesh is not mesh:
        raise ValueError("lumped_inner: fields live on a different mesh")
    return float(np.einsum("i,i,i->", mesh.lumped_mass, a.values, b.values))


def triangle_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-triangle constant gradient of the P1 function with these nodal values."""
    xv = mesh.vertices[mesh.triangles, 0]
    yv = mesh.vertices[mesh.triangles, 1]
    b = yv[:, [1, 2, 0]] - yv[:, [2, 0, 1]]
    c = xv[:, [2, 0, 1]] - xv[:, [1, 2, 0]]
    area2 = (xv[:, 1] - xv[:, 0]) * (yv[:, 2] - yv[:, 0]) - (
        xv[:, 2] - xv[:, 0]
    ) * (yv[:, 1] - yv[:, 0])
    v = values[mesh.triangles]
    gx = np.sum(v * b, axis=1) / area2
    gy = np.sum(v * c, axis=1) / area2
    return np.column_stack([gx, gy])


def vertex_average_of_triangle_values(mesh: Mesh, tri_values: np.ndarray) -> np.ndarray:
    """Lumped L2 projection of a piecewise-constant quantity onto the vertices.

    Each triangle contributes one third of its area times its value to every
    corner; dividing by the lumped mass gives the area-weighted vertex average.
    """
    xv = mesh.vertices[mesh.triangles, 0]
    yv = mesh.vertices[mesh.triangles, 1]
    area2 = (xv[:, 1] - xv[:, 0]) * (yv[:, 2] - yv[:, 0]) - (
        xv[:, 2] - xv[:, 0]
    ) * (yv[:, 1] - yv[:, 0])
    w = np.repeat(area2 / 6.0, 3)  # |T|/3 per corner
    acc = np.bincount(
        mesh.triangles.ravel(),
        weights=w * np.repeat(tri_values, 3),
        minlength=mesh.n_vertices,
    )
    return acc / mesh.lumped_mass
