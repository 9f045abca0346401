"""Kernel evaluations and classical bandwidth selection.

Two kernel families are used throughout: the learnable generalized
t-kernel ``(1 + a * r^(2b))^-1`` that the trainer optimizes jointly with
the projection, and the Gaussian RBF used by the fixed-projection
baselines. Bandwidths for the baselines come from the plug-in rule,
adaptive local bandwidths, or leave-one-out cross-validation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDataError,
    InvalidBandwidthError,
    InvalidDensityError,
    InvalidInputError,
    NoValidBandwidthError,
)

# Denominators below this are treated as an empty neighborhood.
DENOMINATOR_FLOOR = 1e-300


@dataclass
class KernelParams:
    """Learnable kernel shape, squared so the effective values stay >= 0."""

    alpha_raw: float = 1.0
    beta_raw: float = 1.0

    @property
    def alpha(self) -> float:
        return self.alpha_raw * self.alpha_raw

    @property
    def beta(self) -> float:
        return self.beta_raw * self.beta_raw


@dataclass
class BandwidthSelection:
    """Result of a bandwidth selector.

    ``h`` is the global bandwidth. ``per_point`` is filled by the adaptive
    local method only. ``candidates``/``cv_scores`` are filled by LOOCV.
    """

    method: str
    h: float
    per_point: np.ndarray | None = None
    sigma_hat: float | None = None
    candidates: np.ndarray | None = None
    cv_scores: np.ndarray | None = None


def _check_sq_norm(sq_norm):
    sq = np.asarray(sq_norm, dtype=np.float64)
    if not np.all(np.isfinite(sq)):
        raise InvalidInputError("squared norm must be finite")
    if np.any(sq < 0):
        raise InvalidInputError("squared norm must be nonnegative")
    return sq


def generalized_kernel(sq_norm, kernel: KernelParams):
    """Evaluate (1 + alpha * u^beta)^-1 at u = squared norm.

    alpha and beta are the squared raw parameters. Returns values in
    (0, 1]; monotone nonincreasing in u when alpha > 0.
    """
    sq = _check_sq_norm(sq_norm)
    alpha = kernel.alpha
    beta = kernel.beta
    return 1.0 / (1.0 + alpha * np.power(sq, beta))


def gaussian_rbf(sq_norm, h):
    """Evaluate exp(-u / (2 h^2)) at u = squared norm."""
    if not np.isfinite(h) or h <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {h}")
    sq = _check_sq_norm(sq_norm)
    return np.exp(-sq / (2.0 * h * h))


def silverman_bandwidth(n: int, d: int, sigma_hat: float) -> float:
    """Plug-in rule for d-dimensional data: (4 / ((d+2) n))^(1/(d+4)) * sigma."""
    if n < 1 or d < 1:
        raise InvalidInputError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not np.isfinite(sigma_hat) or sigma_hat <= 0:
        raise DegenerateDataError(
            f"scale estimate must be positive, got {sigma_hat}"
        )
    return (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4)) * sigma_hat


def scale_estimate(points) -> float:
    """Mean of the per-axis sample standard deviations (ddof=1)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidInputError("need at least 2 points to estimate scale")
    return float(np.mean(np.std(pts, axis=0, ddof=1)))


def alb_bandwidths(h: float, densities) -> np.ndarray:
    """Adaptive local bandwidths: h_i = (G / f_i)^2 * h with G the
    geometric mean of the pilot densities."""
    if not np.isfinite(h) or h <= 0:
        raise InvalidBandwidthError(f"pilot bandwidth must be positive, got {h}")
    f = np.asarray(densities, dtype=np.float64)
    if f.size == 0 or np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise InvalidDensityError("pilot densities must be finite and positive")
    log_g = np.mean(np.log(f))
    lam = np.exp(2.0 * (log_g - np.log(f)))
    return lam * h


def kde_density(points, h: float) -> np.ndarray:
    """Gaussian KDE evaluated at the sample points themselves (2D)."""
    pts = np.asarray(points, dtype=np.float64)
    if not np.isfinite(h) or h <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {h}")
    n, d = pts.shape
    d2 = _pairwise_sq_dists(pts)
    k = np.exp(-d2 / (2.0 * h * h))
    norm = n * (2.0 * np.pi * h * h) ** (d / 2.0)
    return k.sum(axis=1) / norm


def loocv_candidates(h_pilot: float, num: int = 20) -> np.ndarray:
    """Default LOOCV grid: log-spaced in [h/10, 10h] around the pilot."""
    if h_pilot <= 0:
        raise InvalidBandwidthError("pilot bandwidth must be positive")
    return np.logspace(np.log10(h_pilot / 10.0), np.log10(h_pilot * 10.0), num)


def loocv_bandwidth(points, values, candidates) -> BandwidthSelection:
    """Pick the Gaussian-RBF bandwidth minimizing leave-one-out CV error.

    CV(h) = mean_j (y_j - s_j(x_j))^2 where the estimate for point j uses
    every other point as an anchor. Candidates whose leave-one-out
    denominator underflows for any j score +inf. Ties go to the smaller h.
    """
    pts = np.asarray(points, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    cand = np.asarray(candidates, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise InvalidInputError("leave-one-out selection needs at least 3 points")
    if pts.shape[0] != y.shape[0]:
        raise InvalidInputError("points and values must align")
    if cand.size == 0:
        raise InvalidInputError("candidate list must be nonempty")
    if np.any(cand <= 0):
        raise InvalidBandwidthError("candidate bandwidths must be positive")

    m = pts.shape[0]
    d2 = _pairwise_sq_dists(pts)
    scores = np.empty(cand.size, dtype=np.float64)
    for c, h in enumerate(cand):
        k = np.exp(-d2 / (2.0 * h * h))
        np.fill_diagonal(k, 0.0)
        den = k.sum(axis=1)
        if np.any(den < DENOMINATOR_FLOOR):
            scores[c] = np.inf
            continue
        est = (k @ y) / den
        scores[c] = np.mean((y - est) ** 2)
    if not np.any(np.isfinite(scores)):
        raise NoValidBandwidthError(
            "every candidate produced an empty leave-one-out neighborhood"
        )
    order = np.argsort(cand, kind="stable")
    best = order[int(np.argmin(scores[order]))]  # ties -> smaller h
    return BandwidthSelection(
        method="loocv",
        h=float(cand[best]),
        candidates=cand.copy(),
        cv_scores=scores,
    )


def select_bandwidth(points, values=None, method: str = "silverman") -> BandwidthSelection:
    """Run a named selector on 2D anchor points.

    silverman: plug-in rule with the mean per-axis sample std.
    alb: per-point bandwidths adapted from a Silverman pilot via
         Gaussian-KDE pilot densities.
    loocv: cross-validated global bandwidth (requires values).
    """
    pts = np.asarray(points, dtype=np.float64)
    n, d = pts.shape
    sigma = scale_estimate(pts)
    h0 = silverman_bandwidth(n, d, sigma)
    if method == "silverman":
        return BandwidthSelection(method="silverman", h=h0, sigma_hat=sigma)
    if method == "alb":
        dens = kde_density(pts, h0)
        return BandwidthSelection(
            method="alb", h=h0, per_point=alb_bandwidths(h0, dens), sigma_hat=sigma
        )
    if method == "loocv":
        if values is None:
            raise InvalidInputError("loocv selection needs metric values")
        return loocv_bandwidth(pts, values, loocv_candidates(h0))
    raise InvalidInputError(f"unknown bandwidth method: {method}")


def _pairwise_sq_dists(a, b=None):
    """Squared Euclidean distances, clipped at zero against rounding.

    The 2D case uses the direct difference form: each entry then depends
    only on its own pair of points, never on the matrix shape (BLAS picks
    shape-dependent instruction orders), which zoom consistency relies on.
    """
    a = np.asarray(a, dtype=np.float64)
    b = a if b is None else np.asarray(b, dtype=np.float64)
    if a.shape[1] == 2:
        dx = a[:, 0, None] - b[None, :, 0]
        dy = a[:, 1, None] - b[None, :, 1]
        return dx * dx + dy * dy
    aa = np.sum(a * a, axis=1)
    bb = aa if b is a else np.sum(b * b, axis=1)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2
