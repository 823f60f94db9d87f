"""Random smooth image deformations.

A deformation is built in three steps: place a k x k grid of control points
on the image, draw a random displacement for every control point (each
component uniform on [-C, +C] pixels), then densify the sparse displacements
into a per-pixel field with thin plate spline interpolation. The field is
applied by backward warping: each output pixel bilinearly samples the source
image at its own location plus the field offset, with out-of-range source
coordinates clamped to the border.

Fields and warps are computed in float64; images are stored as float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deformlab.seeding import check_seed, child_seeds, rng_from


class DeformError(ValueError):
    """Invalid deformation inputs or a singular interpolation system."""


@dataclass(frozen=True)
class DeformationSpec:
    """Parameters of the random deformation distribution.

    grid_size: number of control points per axis (k, giving k*k points).
    max_displacement: largest displacement magnitude per component, in pixels.
    seed: 64-bit seed; the same spec always yields the same displacements.
    """

    grid_size: int
    max_displacement: float
    seed: int

    def __post_init__(self):
        if self.grid_size < 2:
            raise DeformError(f"grid_size must be >= 2, got {self.grid_size}")
        if not self.max_displacement >= 0:
            raise DeformError(f"max_displacement must be >= 0, got {self.max_displacement}")
        check_seed(self.seed)


@dataclass(frozen=True)
class ControlDisplacements:
    """Sparse displacements: (row, col) control points and their (drow, dcol) offsets."""

    points: np.ndarray       # (n, 2) float64
    displacements: np.ndarray  # (n, 2) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        dis = np.asarray(self.displacements, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DeformError(f"points must have shape (n, 2), got {pts.shape}")
        if dis.shape != pts.shape:
            raise DeformError(f"displacements shape {dis.shape} != points shape {pts.shape}")
        if not (np.isfinite(pts).all() and np.isfinite(dis).all()):
            raise DeformError("control points and displacements must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "displacements", dis)


@dataclass(frozen=True)
class DeformationField:
    """Dense per-pixel source-sample offsets, entry (r, c) = (drow, dcol)."""

    height: int
    width: int
    offsets: np.ndarray  # (h, w, 2) float64

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.float64)
        if off.shape != (self.height, self.width, 2):
            raise DeformError(
                f"offsets shape {off.shape} != ({self.height}, {self.width}, 2)"
            )
        if not np.isfinite(off).all():
            raise DeformError("deformation field must be finite")
        object.__setattr__(self, "offsets", off)


def make_control_grid(k: int, h: int, w: int) -> np.ndarray:
    """Evenly spaced k x k control points covering [0, h-1] x [0, w-1] inclusive.

    Returned in row-major order as an (k*k, 2) array of (row, col) coordinates.
    Requires k >= 2 so the grid spans the image and is never collinear, which
    keeps the spline system (with its affine term) well posed.
    """
    if k < 2:
        raise DeformError(f"control grid needs k >= 2, got {k}")
    if h < 2 or w < 2:
        raise DeformError(f"image must be at least 2x2, got {h}x{w}")
    rows = np.linspace(0.0, h - 1.0, k)
    cols = np.linspace(0.0, w - 1.0, k)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def sample_control_displacements(spec: DeformationSpec, grid: np.ndarray) -> ControlDisplacements:
    """Draw one displacement per control point, each component uniform on [-C, +C]."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] != 2:
        raise DeformError(f"grid must have shape (n, 2), got {grid.shape}")
    if grid.shape[0] != spec.grid_size**2:
        raise DeformError(
            f"grid has {grid.shape[0]} points, spec expects {spec.grid_size**2}"
        )
    rng = rng_from(spec.seed)
    c = float(spec.max_displacement)
    d = rng.uniform(-c, c, size=grid.shape)
    return ControlDisplacements(points=grid, displacements=d)


def _tps_kernel(sq_dist: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log r, evaluated as 0.5 * d2 * log(d2) with U(0) = 0.
    out = np.zeros_like(sq_dist)
    mask = sq_dist > 0.0
    out[mask] = 0.5 * sq_dist[mask] * np.log(sq_dist[mask])
    return out


def _tps_solve(cd: ControlDisplacements):
    """(kernel weights, affine coefficients) of the interpolating spline."""
    pts = cd.points
    n = pts.shape[0]
    if n < 4:
        raise DeformError(f"thin plate spline needs at least 4 control points, got {n}")

    diff = pts[:, None, :] - pts[None, :, :]
    k_mat = _tps_kernel(np.sum(diff * diff, axis=2))
    p_mat = np.concatenate([np.ones((n, 1)), pts], axis=1)

    lhs = np.zeros((n + 3, n + 3))
    lhs[:n, :n] = k_mat
    lhs[:n, n:] = p_mat
    lhs[n:, :n] = p_mat.T
    rhs = np.concatenate([cd.displacements, np.zeros((3, 2))], axis=0)
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise DeformError(
            "singular thin plate spline system (collinear or duplicate control points)"
        ) from exc
    return sol[:n], sol[n:]


def _tps_eval(pts, weights, affine, q):
    qdiff = q[:, None, :] - pts[None, :, :]
    u = _tps_kernel(np.sum(qdiff * qdiff, axis=2))
    return u @ weights + affine[0] + q[:, :1] * affine[1] + q[:, 1:2] * affine[2]


def tps_at_points(cd: ControlDisplacements, points) -> np.ndarray:
    """Evaluate the interpolant at arbitrary (row, col) coordinates.

    Returns one (drow, dcol) displacement per query point.  At the control
    points themselves this reproduces ``cd.displacements`` up to solver
    roundoff, regardless of whether those coordinates fall on the pixel
    lattice.
    """
    q = np.ascontiguousarray(points, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 2:
        raise DeformError(f"points must be (m, 2) row/col coordinates, got {q.shape}")
    weights, affine = _tps_solve(cd)
    return _tps_eval(cd.points, weights, affine, q)


def tps_densify(cd: ControlDisplacements, h: int, w: int) -> DeformationField:
    """Interpolate sparse control displacements into a dense field.

    Standard thin plate spline with kernel U(r) = r^2 log r plus an affine
    polynomial part and zero smoothing, solved separately for the row and
    column offset channels. The result reproduces the control displacements
    exactly (up to solver roundoff) at the control points.
    """
    weights, affine = _tps_solve(cd)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    q = np.stack([rr.ravel(), cc.ravel()], axis=1)
    dense = _tps_eval(cd.points, weights, affine, q)
    return DeformationField(height=h, width=w, offsets=dense.reshape(h, w, 2))


def _as_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DeformError(f"image must be (h, w) or (h, w, channels), got shape {arr.shape}")
    return arr


def warp(img: np.ndarray, field: DeformationField) -> np.ndarray:
    """Backward-warp an image: output(r, c) samples the input at (r, c) + offset(r, c).

    Bilinear interpolation; source coordinates outside the image are clamped
    to the border. A zero field reproduces the input bit for bit.
    """
    arr = _as_image(img)
    h, w, _ = arr.shape
    if (field.height, field.width) != (h, w):
        raise DeformError(
            f"field is {field.height}x{field.width} but image is {h}x{w}"
        )
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_r = np.clip(rr + field.offsets[:, :, 0], 0.0, h - 1.0)
    src_c = np.clip(cc + field.offsets[:, :, 1], 0.0, w - 1.0)

    r0 = np.floor(src_r).astype(np.intp)
    c0 = np.floor(src_c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (src_r - r0)[:, :, None]
    fc = (src_c - c0)[:, :, None]

    vals = arr.astype(np.float64, copy=False)
    out = (
        vals[r0, c0] * (1.0 - fr) * (1.0 - fc)
        + vals[r0, c1] * (1.0 - fr) * fc
        + vals[r1, c0] * fr * (1.0 - fc)
        + vals[r1, c1] * fr * fc
    )
    out = out.astype(np.float32)
    if img.ndim == 2:
        return out[:, :, 0]
    return out


def deform_image(img: np.ndarray, spec: DeformationSpec) -> tuple[np.ndarray, DeformationField]:
    """Sample one random deformation for `img` and apply it.

    Returns the warped image together with the dense field so callers can
    inspect or reuse the sampled deformation.
    """
    arr = _as_image(img)
    h, w, _ = arr.shape
    grid = make_control_grid(spec.grid_size, h, w)
    cd = sample_control_displacements(spec, grid)
    field = tps_densify(cd, h, w)
    return warp(img, field), field


def per_image_specs(spec: DeformationSpec, n: int) -> list[DeformationSpec]:
    """Derive `n` independent single-image specs from one profile-level spec."""
    seeds = child_seeds(spec.seed, n, "per-image")
    return [
        DeformationSpec(spec.grid_size, spec.max_displacement, s) for s in seeds
    ]


def affine_to_displacements(
    a_mat: np.ndarray,
    t: np.ndarray,
    grid: np.ndarray,
    center: np.ndarray,
) -> ControlDisplacements:
    """Control displacements whose densified field approximates an affine map.

    The target map sends p to A (p - center) + center + t, so the displacement
    stored at each grid point is A (p - center) + center + t - p. Useful for
    expressing translations, rotations, and local pose shifts inside the same
    deformation class as the random fields.
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(2)
    center = np.asarray(center, dtype=np.float64).reshape(2)
    grid = np.asarray(grid, dtype=np.float64)
    if a_mat.shape != (2, 2):
        raise DeformError(f"affine matrix must be 2x2, got {a_mat.shape}")
    disp = (grid - center) @ a_mat.T + center + t - grid
    return ControlDisplacements(points=grid, displacements=disp)
