"""Diffuse-interface field construction from curves, polygons and rasters."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .forward import forward_step_unconstrained
from .mesh import Field, Mesh
from .model import ModelParams


@dataclass(frozen=True)
class ImplicitCurve:
    """Level set (x/x_scale - cx)^2 + (y - cy)^2 - radius^2 + amp_x sin(freq_x x) + amp_y sin(freq_y y).

    Negative values are inside.  Covers circles, stretched circles and the
    sinusoidally perturbed blobs used by the built-in multi-cell datasets.
    """

    cx: float
    cy: float
    radius: float
    x_scale: float = 1.0
    amp_x: float = 0.0
    freq_x: float = 0.0
    amp_y: float = 0.0
    freq_y: float = 0.0

    def __call__(self, x, y):
        return (
            (x / self.x_scale - self.cx) ** 2
            + (y - self.cy) ** 2
            - self.radius**2
            + self.amp_x * np.sin(self.freq_x * x)
            + self.amp_y * np.sin(self.freq_y * y)
        )

    @classmethod
    def circle(cls, cx: float, cy: float, radius: float) -> "ImplicitCurve":
        return cls(cx=cx, cy=cy, radius=radius)


@dataclass(frozen=True)
class Polygon:
    """Closed polygon given by its vertices (no repeated endpoint)."""

    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")

    def contains(self, x, y):
        """Even-odd rule, vectorized over query points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        pts = np.asarray(self.vertices, dtype=float)
        k = len(pts)
        j = k - 1
        for i in range(k):
            xi, yi = pts[i]
            xj, yj = pts[j]
            crosses = (yi > y) != (yj > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= crosses & (x < x_at)
            j = i
        return inside

    def signed_distance(self, x, y):
        """Distance to the boundary, positive inside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        pts = np.asarray(self.vertices, dtype=float)
        k = len(pts)
        dist2 = np.full(x.shape, np.inf)
        for i in range(k):
            ax, ay = pts[i]
            bx, by = pts[(i + 1) % k]
            dx, dy = bx - ax, by - ay
            seg2 = dx * dx + dy * dy
            t = np.clip(((x - ax) * dx + (y - ay) * dy) / seg2, 0.0, 1.0)
            ex = x - (ax + t * dx)
            ey = y - (ay + t * dy)
            dist2 = np.minimum(dist2, ex * ex + ey * ey)
        dist = np.sqrt(dist2)
        return np.where(self.contains(x, y), dist, -dist)


@dataclass(frozen=True)
class RasterImage:
    """Grayscale raster stretched over a rectangle; row 0 is the top edge."""

    intensities: np.ndarray  # (height, width), values in [0, 1]
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=float)
        if arr.ndim != 2:
            raise ValueError("raster intensities must be a 2-d array")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("raster intensities must lie in [0, 1]")
        object.__setattr__(self, "intensities", arr)

    @property
    def shape(self):
        return self.intensities.shape

    def sample_nearest(self, x, y):
        """Nearest-pixel intensity lookup at domain coordinates."""
        h, w = self.intensities.shape
        col = np.clip(
            np.floor((np.asarray(x) - self.x0) / (self.x1 - self.x0) * w), 0, w - 1
        ).astype(int)
        row = np.clip(
            np.floor((self.y1 - np.asarray(y)) / (self.y1 - self.y0) * h), 0, h - 1
        ).astype(int)
        return self.intensities[row, col]


def read_pgm(path, x0: float, y0: float, x1: float, y1: float) -> RasterImage:
    """Read a plain (P2) or binary (P5) PGM file onto the given rectangle."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    magic = tokens[0].decode("ascii")
    if magic not in ("P2", "P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval <= 0:
        raise ValueError(f"{path}: bad PGM maxval {maxval}")

    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=float)
        if values.size != width * height:
            raise ValueError(f"{path}: expected {width * height} pixels, got {values.size}")
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
        values = raw.astype(float)
    intensities = (values / maxval).reshape(height, width)
    return RasterImage(intensities, x0, y0, x1, y1)


def _interior_mask(mesh: Mesh, spec, threshold: float) -> np.ndarray:
    xs, ys = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if isinstance(spec, ImplicitCurve):
        return spec(xs, ys) < 0.0
    if isinstance(spec, Polygon):
        return spec.contains(xs, ys)
    if isinstance(spec, RasterImage):
        return spec.sample_nearest(xs, ys) > threshold
    if isinstance(spec, (list, tuple)):
        mask = np.zeros(mesh.n_vertices, dtype=bool)
        for part in spec:
            mask |= _interior_mask(mesh, part, threshold)
        return mask
    raise TypeError(f"unsupported geometry spec: {type(spec).__name__}")


def indicator_field(mesh: Mesh, spec, threshold: float = 0.5) -> Field:
    """Nodal indicator: +1 where the interior test passes, -1 elsewhere.

    The interior test is "implicit function < 0" for curves, point-in-polygon
    for polygons and "intensity > threshold" for rasters; sequences are
    unions.  Rejects geometry that reaches the domain boundary.
    """
    mask = _interior_mask(mesh, spec, threshold)
    nx, ny = mesh.nx, mesh.ny
    grid = mask.reshape(ny + 1, nx + 1)
    if grid[0, :].any() or grid[-1, :].any() or grid[:, 0].any() or grid[:, -1].any():
        raise ValueError("geometry touches the domain boundary")
    return Field(mesh, np.where(mask, 1.0, -1.0))


def smooth_indicator(f: Field, params: ModelParams, n_steps: int = 10) -> Field:
    """Relax a nodal indicator with unforced solver steps to set up the interface layer.

    A handful of steps establishes an O(epsilon) transition profile while
    moving the interface only O(n_steps * tau / epsilon).
    """
    if np.max(np.abs(f.values)) > 1.0 + 1e-12:
        raise ValueError("smooth_indicator expects values in [-1, 1]")
    zero = Field(f.mesh, np.zeros(f.mesh.n_vertices))
    out = f
    for _ in range(n_steps):
        out = forward_step_unconstrained(out, zero, params)
    return out


def smoothing_params(params: ModelParams) -> ModelParams:
    """Params clone whose step size respects the explicit-reaction stability scale.

    Dataset construction smooths indicators with this so that coarse desk
    runs (tau above epsilon^2/2) still get a clean initial layer.
    """
    tau = min(params.tau, params.stable_tau)
    return replace(params, tau=tau, T=tau)


def tanh_profile_field(mesh: Mesh, signed_distance, epsilon: float) -> Field:
    """Nodal tanh(d(x) / (sqrt(2) epsilon)) for a signed distance (positive inside)."""
    xs, ys = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if hasattr(signed_distance, "signed_distance"):
        d = signed_distance.signed_distance(xs, ys)
    else:
        d = signed_distance(xs, ys)
    return Field(mesh, np.tanh(np.asarray(d, dtype=float) / (np.sqrt(2.0) * epsilon)))


def circle_signed_distance(cx: float, cy: float, radius: float):
    """Signed distance to a circle, positive inside."""

    def dist(x, y):
        return radius - np.hypot(x - cx, y - cy)

    return dist
