"""Projection normalization, contour grids, cutoff masks, point sampling,
and grid export.

Grid cells are evaluated at cell centers: a cell covering index (i, j) of
an (nw, nh) subdivision of a bbox is sampled at
``(xmin + (i+0.5)*step_x, ymin + (j+0.5)*step_y)``. Every cell value is a
pure function of that position, so coincident positions across different
bboxes and resolutions produce identical values (zoom consistency).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidCountError, InvalidInputError
from .kernels import (
    KernelParams,
    _pairwise_sq_dists,
    gaussian_rbf,
    generalized_kernel,
)
from .losses import nw_estimate_batch
from .model import ModelState, forward

DEFAULT_TAU = 0.05
DEFAULT_GRID = 500


@dataclass
class Projection2D:
    raw: np.ndarray  # N x 2
    mins: np.ndarray  # per-axis minimum
    maxs: np.ndarray  # per-axis maximum
    normalized: np.ndarray  # N x 2 in [0, 1]^2

    def apply(self, raw_points) -> np.ndarray:
        """Normalize further points with this projection's transform."""
        pts = np.asarray(raw_points, dtype=np.float64)
        span = self.maxs - self.mins
        out = np.empty_like(pts)
        for axis in range(2):
            if span[axis] == 0.0:
                out[:, axis] = 0.5
            else:
                out[:, axis] = (pts[:, axis] - self.mins[axis]) / span[axis]
        return out

    def denormalize(self, positions) -> np.ndarray:
        """Map normalized positions back into the raw coordinate frame."""
        pos = np.asarray(positions, dtype=np.float64)
        return self.mins + pos * (self.maxs - self.mins)


def normalize_projection(raw) -> Projection2D:
    """Min-max normalize 2D coordinates per axis into [0, 1]; an axis with
    zero spread maps to 0.5."""
    pts = np.asarray(raw, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise InvalidInputError("expected a nonempty N x 2 array")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("coordinates must be finite")
    mins = pts.min(axis=0)
    maxs = pts.max(axis=0)
    proj = Projection2D(raw=pts.copy(), mins=mins, maxs=maxs, normalized=None)
    proj.normalized = proj.apply(pts)
    return proj


class NwEstimator:
    """Kernel-regression estimator addressed in normalized coordinates.

    ``anchors_est`` live in the estimation frame; ``to_frame`` maps
    normalized query positions into that frame (identity when None). The
    learned-kernel estimator regresses in the raw projection frame where
    the kernel shape was trained; the RBF baselines regress directly in
    normalized coordinates.
    """

    def __init__(self, anchors_est, values, kernel_eval, desc, anchors_norm=None, to_frame=None):
        self.anchors_est = np.asarray(anchors_est, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.kernel_eval = kernel_eval
        self.desc = desc
        self.anchors_norm = (
            self.anchors_est if anchors_norm is None else np.asarray(anchors_norm, dtype=np.float64)
        )
        self.to_frame = to_frame

    def estimate(self, positions):
        pos = np.asarray(positions, dtype=np.float64)
        if self.to_frame is not None:
            pos = self.to_frame(pos)
        return nw_estimate_batch(pos, self.anchors_est, self.values, self.kernel_eval)


def model_estimator(st: ModelState, X, values):
    """Estimator for a trained model: anchors are the dataset's normalized
    projected points and the kernel is the model's learned shape, applied
    in normalized coordinates exactly as during training. Returns
    (estimator, projection)."""
    if st.mode != "inference":
        raise InvalidInputError("estimator requires a model in inference mode")
    raw = forward(st, X)
    proj = normalize_projection(raw)
    kernel = KernelParams(st.kernel.alpha_raw, st.kernel.beta_raw)
    est = NwEstimator(
        anchors_est=proj.normalized,
        values=values,
        kernel_eval=lambda d2: generalized_kernel(d2, kernel),
        desc=f"generalized-t(alpha={kernel.alpha:.6g}, beta={kernel.beta:.6g})",
        anchors_norm=proj.normalized,
    )
    return est, proj


def rbf_estimator(anchors_norm, values, h=None, per_point=None):
    """Gaussian-RBF estimator in normalized coordinates; ``per_point``
    bandwidths (one per anchor) take precedence over the global ``h``."""
    if per_point is not None:
        h_i = np.asarray(per_point, dtype=np.float64)
        if np.any(h_i <= 0):
            raise InvalidInputError("per-point bandwidths must be positive")

        def kernel_eval(d2, h_i=h_i):
            return np.exp(-d2 / (2.0 * h_i * h_i)[None, :])

        desc = f"gaussian-rbf(per-point, median h={np.median(h_i):.6g})"
    else:
        if h is None:
            raise InvalidInputError("need a bandwidth")

        def kernel_eval(d2, h=h):
            return gaussian_rbf(d2, h)

        desc = f"gaussian-rbf(h={h:.6g})"
    return NwEstimator(anchors_norm, values, kernel_eval, desc)


@dataclass
class ContourGrid:
    bbox: tuple  # (xmin, xmax, ymin, ymax) in normalized space
    nw: int
    nh: int
    values: np.ndarray  # nh x nw, finite wherever mask is True
    mask: np.ndarray  # nh x nw bool, True = rendered
    score_min: float
    score_max: float
    kernel_desc: str = ""


def cell_positions(bbox, nw: int, nh: int) -> np.ndarray:
    """Row-major cell-center positions of a uniform bbox subdivision."""
    xmin, xmax, ymin, ymax = bbox
    step_x = (xmax - xmin) / nw
    step_y = (ymax - ymin) / nh
    xs = xmin + (np.arange(nw) + 0.5) * step_x
    ys = ymin + (np.arange(nh) + 0.5) * step_y
    pos = np.empty((nh * nw, 2), dtype=np.float64)
    pos[:, 0] = np.tile(xs, nh)
    pos[:, 1] = np.repeat(ys, nw)
    return pos


def _check_bbox(bbox):
    xmin, xmax, ymin, ymax = (float(v) for v in bbox)
    if not all(np.isfinite([xmin, xmax, ymin, ymax])):
        raise InvalidInputError("bbox must be finite")
    if xmin >= xmax or ymin >= ymax:
        raise InvalidInputError("bbox must satisfy min < max per axis")
    return xmin, xmax, ymin, ymax


def grid_eval(estimator, bbox=(0.0, 1.0, 0.0, 1.0), nw: int = DEFAULT_GRID, nh: int = DEFAULT_GRID) -> ContourGrid:
    """Evaluate the estimator at every cell center of the bbox.

    Cells whose kernel weights underflow are masked rather than raised.
    """
    bbox = _check_bbox(bbox)
    if nw < 2 or nh < 2:
        raise InvalidInputError("grid resolution must be >= 2 per axis")
    pos = cell_positions(bbox, nw, nh)
    est, valid = estimator.estimate(pos)
    return ContourGrid(
        bbox=bbox,
        nw=nw,
        nh=nh,
        values=est.reshape(nh, nw),
        mask=valid.reshape(nh, nw),
        score_min=float(estimator.values.min()),
        score_max=float(estimator.values.max()),
        kernel_desc=estimator.desc,
    )


def cutoff_mask(grid: ContourGrid, anchors_norm, tau: float = DEFAULT_TAU) -> ContourGrid:
    """Mask cells whose nearest anchor (normalized frame) is farther than
    tau; cells without a valid value stay masked."""
    if not tau > 0:
        raise InvalidInputError("distance threshold must be positive")
    anchors = np.asarray(anchors_norm, dtype=np.float64)
    pos = cell_positions(grid.bbox, grid.nw, grid.nh)
    if np.isinf(tau):
        near = np.ones(pos.shape[0], dtype=bool)
    else:
        d2 = _pairwise_sq_dists(pos, anchors)
        near = d2.min(axis=1) <= tau * tau
    return ContourGrid(
        bbox=grid.bbox,
        nw=grid.nw,
        nh=grid.nh,
        values=grid.values,
        mask=grid.mask & near.reshape(grid.nh, grid.nw),
        score_min=grid.score_min,
        score_max=grid.score_max,
        kernel_desc=grid.kernel_desc,
    )


def sample_points(points, method: str, count: int | None = None, radius: float | None = None, seed: int = 0) -> np.ndarray:
    """Select a subset of point indices for overlay display.

    random: uniform without replacement (requires count <= N).
    poisson: greedy blue-noise thinning over a seed-shuffled order; the
    selected points are pairwise >= radius apart and every unselected
    point lies within radius of a selected one.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    rng = np.random.default_rng(abs(int(seed)))
    if method == "random":
        if count is None or count < 0 or count > n:
            raise InvalidCountError(f"count must be in [0, {n}], got {count}")
        return np.sort(rng.choice(n, size=count, replace=False))
    if method == "poisson":
        if radius is None or radius < 0 or not np.isfinite(radius):
            raise InvalidInputError("poisson sampling needs a finite radius >= 0")
        if n == 0:
            return np.empty(0, dtype=np.int64)
        if radius == 0.0:
            return np.arange(n, dtype=np.int64)
        order = rng.permutation(n)
        selected = []
        r2 = radius * radius
        for idx in order:
            p = pts[idx]
            if selected:
                d2 = np.sum((pts[selected] - p) ** 2, axis=1)
                if np.any(d2 < r2):
                    continue
            selected.append(idx)
        return np.sort(np.asarray(selected, dtype=np.int64))
    raise InvalidInputError(f"unknown sampling method: {method}")


def grid_to_dict(grid: ContourGrid) -> dict:
    """JSON-ready export; masked cells carry 0.0 with mask False."""
    values = np.where(grid.mask, grid.values, 0.0)
    return {
        "bbox": [float(v) for v in grid.bbox],
        "nw": grid.nw,
        "nh": grid.nh,
        "values": [float(v) for v in values.ravel()],
        "mask": [bool(m) for m in grid.mask.ravel()],
        "score_min": grid.score_min,
        "score_max": grid.score_max,
    }


# Fixed sequential ramp (dark purple -> yellow), linearly interpolated.
_RAMP_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_RAMP_COLORS = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
    dtype=np.float64,
)
_MASKED_RGB = (247, 247, 247)


def colormap(t) -> np.ndarray:
    """Map values in [0, 1] to RGB byte triplets through the built-in ramp."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    rgb = np.empty(t.shape + (3,), dtype=np.uint8)
    for c in range(3):
        rgb[..., c] = np.rint(np.interp(t, _RAMP_STOPS, _RAMP_COLORS[:, c])).astype(np.uint8)
    return rgb


def write_ppm(grid: ContourGrid, path):
    """Lossless raster export: one byte triplet per cell (binary PPM),
    top row = largest y."""
    span = grid.score_max - grid.score_min
    if span <= 0:
        t = np.full_like(grid.values, 0.5)
    else:
        t = (grid.values - grid.score_min) / span
    t = np.where(grid.mask, t, 0.0)
    rgb = colormap(t)
    rgb[~grid.mask] = _MASKED_RGB
    rgb = rgb[::-1]  # image rows run top-down
    with open(path, "wb") as fh:
        fh.write(f"P6\n{grid.nw} {grid.nh}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
