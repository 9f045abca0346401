"""Loss components: kernel-regression estimate, weighted split loss,
perplexity-free neighborhood KL, and the combined objective.

The neighborhood term compares a high-dimensional affinity matrix P
against the low-dimensional t-kernel affinities Q. P is built without a
user-set perplexity by averaging Gaussian conditionals over dyadic
neighborhood sizes 2, 4, ..., B/2, solving each point's precision so the
conditional entropy matches the level's target.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    BatchTooSmallError,
    DegenerateBatchError,
    EmptyNeighborhoodError,
    InvalidInputError,
    SplitConfigError,
)
from .kernels import DENOMINATOR_FLOOR, _pairwise_sq_dists

LOG_FLOOR = 1e-12
ENTROPY_TOL = 1e-5
ENTROPY_MAX_ITER = 50


@dataclass
class AffinityMatrices:
    """Symmetric, zero-diagonal neighborhood distributions; each sums to 1
    over the off-diagonal entries."""

    P: np.ndarray
    Q: np.ndarray
    batch_size: int


@dataclass
class LossBreakdown:
    mse_vl: float
    mse_tr: float
    mse_r: float
    kl: float
    total: float
    lambda_: float
    w1: float
    w2: float
    balance: str = "none"  # 'none' | 'l1' | 'l2'
    balance_weight: float = 1.0


def nw_estimate(query, anchors, values, kernel_eval) -> float:
    """Kernel-weighted average of anchor values at a single query point.

    kernel_eval maps squared distances to positive weights. The result is
    a convex combination, clamped into [min(values), max(values)] against
    rounding.
    """
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    a = np.asarray(anchors, dtype=np.float64)
    s = np.asarray(values, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[0] != s.shape[0]:
        raise InvalidInputError("anchors and values must align and be nonempty")
    est, ok = nw_estimate_batch(q, a, s, kernel_eval)
    if not ok[0]:
        raise EmptyNeighborhoodError("kernel weights underflowed at the query")
    return float(est[0])


def nw_estimate_batch(queries, anchors, values, kernel_eval):
    """Vectorized estimate at many query points.

    Returns (estimates, valid) where valid is False wherever the weight
    denominator underflowed; such entries hold NaN. Each row's value is a
    pure function of its own query position.
    """
    q = np.asarray(queries, dtype=np.float64)
    a = np.asarray(anchors, dtype=np.float64)
    s = np.asarray(values, dtype=np.float64)
    d2 = _pairwise_sq_dists(q, a)
    w = kernel_eval(d2)
    den = w.sum(axis=1)
    valid = den >= DENOMINATOR_FLOOR
    est = np.full(q.shape[0], np.nan)
    if np.any(valid):
        # Per-row reductions keep each value a pure function of its own
        # query position (BLAS products round shape-dependently).
        num = (w * s[None, :]).sum(axis=1)
        est[valid] = num[valid] / den[valid]
        np.clip(est, s.min(), s.max(), out=est)
    return est, valid


def mse_split(est_tr, s_tr, est_vl, s_vl, w1: float, w2: float):
    """Per-split mean squared errors and their weighted combination."""
    est_vl = np.asarray(est_vl, dtype=np.float64)
    s_vl = np.asarray(s_vl, dtype=np.float64)
    est_tr = np.asarray(est_tr, dtype=np.float64)
    s_tr = np.asarray(s_tr, dtype=np.float64)
    if est_vl.size == 0:
        raise SplitConfigError("validation split is empty")
    if est_tr.size == 0:
        raise SplitConfigError("training split is empty")
    if est_vl.shape != s_vl.shape or est_tr.shape != s_tr.shape:
        raise InvalidInputError("estimates and targets must align per split")
    mse_vl = float(np.mean((est_vl - s_vl) ** 2))
    mse_tr = float(np.mean((est_tr - s_tr) ** 2))
    return mse_vl, mse_tr, w1 * mse_vl + w2 * mse_tr


_LN_LIMIT = 69.0  # log-precision confined to [e^-69, e^69]


def _solve_precisions(delta, target, beta0, lower=None, f_lower=None):
    """Per-row Gaussian precisions matching a conditional-entropy target.

    delta: row-shifted squared distances (diagonal ignored). Each row is
    solved by bracketed root finding on log-precision: geometric expansion
    until the entropy target is straddled, then Illinois-accelerated
    secant steps, capped at ENTROPY_MAX_ITER evaluations and stopping at
    |H - target| <= ENTROPY_TOL. A known lower bracket (from the previous
    neighborhood level) enters via ``lower``/``f_lower``. Matrix work runs
    in float32 (the entropy tolerance sits far above float32 noise);
    precisions return as float64.
    """
    b = delta.shape[0]
    idx = np.arange(b)
    delta32 = delta if delta.dtype == np.float32 else delta.astype(np.float32)

    la = np.full(b, -np.inf)  # log-precision with entropy above target
    fa = np.zeros(b)
    have_a = np.zeros(b, dtype=bool)
    lb = np.full(b, np.inf)  # log-precision with entropy below target
    fb = np.zeros(b)
    have_b = np.zeros(b, dtype=bool)
    if lower is not None:
        la = np.log(np.maximum(lower, 1e-300))
        fa[:] = f_lower
        have_a[:] = True
        cand = la + np.log(4.0)
    else:
        cand = np.log(np.maximum(beta0, 1e-300)).copy()
    np.clip(cand, -_LN_LIMIT, _LN_LIMIT, out=cand)

    best = np.exp(cand)
    active = np.ones(b, dtype=bool)
    last_side = np.zeros(b, dtype=np.int8)
    for _ in range(ENTROPY_MAX_ITER):
        n_active = int(active.sum())
        if n_active == 0:
            break
        # Gathering rows costs more than it saves until few remain.
        subset = n_active < 0.35 * b
        rows = idx[active] if subset else idx
        dl = delta32[rows] if subset else delta32
        bcur = np.exp(cand[rows]).astype(np.float32)
        w = np.exp(dl * -bcur[:, None])
        w[np.arange(rows.size), rows] = 0.0
        z = w.sum(axis=1)
        w *= dl
        s_w = w.sum(axis=1)
        entropy = np.log(z) + bcur * (s_w / z)
        diff = entropy.astype(np.float64) - target
        alive = active[rows]
        best[rows[alive]] = np.exp(cand[rows])[alive]
        done = (np.abs(diff) <= ENTROPY_TOL) & alive
        active[rows[done]] = False
        alive = alive & ~done

        # Bracket update; Illinois halves the opposite endpoint only when
        # the same side repeats, otherwise the secant collapses onto the
        # stale endpoint.
        above = (diff > 0) & alive
        below = (diff <= 0) & alive
        r_above = rows[above]
        r_below = rows[below]
        repeat_a = last_side[r_above] == 1
        repeat_b = last_side[r_below] == 2
        la[r_above] = cand[r_above]
        fa[r_above] = diff[above]
        fb[r_above[repeat_a & have_b[r_above]]] *= 0.5
        lb[r_below] = cand[r_below]
        fb[r_below] = diff[below]
        fa[r_below[repeat_b & have_a[r_below]]] *= 0.5
        have_a[r_above] = True
        have_b[r_below] = True
        last_side[r_above] = 1
        last_side[r_below] = 2

        r_act = rows[alive]
        both = have_a[r_act] & have_b[r_act]
        with np.errstate(invalid="ignore"):
            secant = (la[r_act] * fb[r_act] - lb[r_act] * fa[r_act]) / (
                fb[r_act] - fa[r_act]
            )
        mid = 0.5 * (la[r_act] + lb[r_act])
        inside = np.isfinite(secant) & (secant > la[r_act]) & (secant < lb[r_act])
        step = np.where(both, np.where(inside, secant, mid), 0.0)
        # One-sided rows keep expanding geometrically toward the root.
        step = np.where(~both & have_a[r_act], la[r_act] + np.log(4.0), step)
        step = np.where(~both & ~have_a[r_act], lb[r_act] - np.log(4.0), step)
        np.clip(step, -_LN_LIMIT, _LN_LIMIT, out=step)
        cand[r_act] = step
    return best


def _conditionals(delta, precisions):
    b = delta.shape[0]
    w = np.exp(-precisions[:, None] * delta)
    np.fill_diagonal(w, 0.0)
    return w / w.sum(axis=1, keepdims=True)


def multiscale_affinities(X) -> np.ndarray:
    """High-dimensional affinity matrix P averaged over dyadic
    neighborhood scales 2^h, h = 1..floor(log2(B/2))."""
    X = np.asarray(X, dtype=np.float64)
    b = X.shape[0]
    if b < 4:
        raise BatchTooSmallError("neighborhood affinities need a batch of >= 4")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("batch contains non-finite values")
    d2 = _pairwise_sq_dists(X)
    off = d2[~np.eye(b, dtype=bool)]
    if off.max() == 0.0:
        raise DegenerateBatchError("all pairwise distances are zero")
    work = d2.copy()
    np.fill_diagonal(work, np.inf)
    shift = work.min(axis=1)
    delta = d2 - shift[:, None]
    np.fill_diagonal(delta, 0.0)

    mean_delta = np.maximum(delta.sum(axis=1) / (b - 1), 1e-12)
    n_levels = int(np.floor(np.log2(b / 2)))
    cond = np.zeros((b, b))
    # Coarsest neighborhood first: its precision root sits near the cold
    # start. Each sharper level halves the entropy target, so the previous
    # root is a lower bracket whose entropy excess is ln 2 exactly.
    delta32 = delta.astype(np.float32)
    precisions = 1.0 / mean_delta
    lower = None
    for h in range(n_levels, 0, -1):
        target = h * np.log(2.0)
        precisions = _solve_precisions(
            delta32, target, precisions, lower, f_lower=np.log(2.0)
        )
        cond += _conditionals(delta, precisions)
        lower = precisions
    cond /= n_levels
    p = cond + cond.T
    p /= p.sum()
    np.fill_diagonal(p, 0.0)
    return p


def low_dim_affinities(Y):
    """t-kernel affinities of 2D coordinates: w = (1+d^2)^-1 normalized
    over off-diagonal pairs. Returns (Q, W)."""
    Y = np.asarray(Y, dtype=np.float64)
    w = 1.0 / (1.0 + _pairwise_sq_dists(Y))
    np.fill_diagonal(w, 0.0)
    total = w.sum()
    return w / total, w


def kl_from_affinities(P, Q) -> float:
    """KL(P || Q) over off-diagonal entries, with both arguments floored
    at 1e-12 inside the log only (0 * log 0 := 0)."""
    terms = P * (np.log(np.maximum(P, LOG_FLOOR)) - np.log(np.maximum(Q, LOG_FLOOR)))
    return float(terms.sum())


def kl_neighborhood(X, Y):
    """Neighborhood-preservation loss between a batch and its projection."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise InvalidInputError("batch and projection must align")
    p = multiscale_affinities(X)
    q, _ = low_dim_affinities(Y)
    return kl_from_affinities(p, q), AffinityMatrices(P=p, Q=q, batch_size=X.shape[0])


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def total_loss(
    mse_r: float,
    kl: float,
    lambda_: float,
    balance: str = "none",
    mu: float = 2.0,
    mu1: float = 1.0,
    k: float = 1.0,
    mse_vl: float = 0.0,
    mse_tr: float = 0.0,
    w1: float = 1.0,
    w2: float = 0.3,
) -> LossBreakdown:
    """Compose the objective from the regression and neighborhood terms.

    none: total = lambda * mse_r + kl
    l1:   total = lambda * mse_r + sigmoid(k*(kl - mu)) * kl
    l2:   total = sigmoid(k*(mse_r - mu1)) * (lambda * mse_r) + kl
    """
    if lambda_ < 0:
        raise InvalidInputError("lambda must be nonnegative")
    if balance not in ("none", "l1", "l2"):
        raise InvalidInputError(f"unknown balance mode: {balance}")
    if balance != "none" and k <= 0:
        raise InvalidInputError("balance decay rate k must be positive")
    if balance == "none":
        weight = 1.0
        total = lambda_ * mse_r + kl
    elif balance == "l1":
        weight = sigmoid(k * (kl - mu))
        total = lambda_ * mse_r + weight * kl
    else:
        weight = sigmoid(k * (mse_r - mu1))
        total = weight * (lambda_ * mse_r) + kl
    return LossBreakdown(
        mse_vl=mse_vl,
        mse_tr=mse_tr,
        mse_r=mse_r,
        kl=kl,
        total=total,
        lambda_=lambda_,
        w1=w1,
        w2=w2,
        balance=balance,
        balance_weight=weight,
    )


def recompose_total(b: LossBreakdown) -> float:
    """Recompute ``total`` from the stored fields (bit-exact)."""
    if b.balance == "none":
        return b.lambda_ * b.mse_r + b.kl
    if b.balance == "l1":
        return b.lambda_ * b.mse_r + b.balance_weight * b.kl
    return b.balance_weight * (b.lambda_ * b.mse_r) + b.kl
