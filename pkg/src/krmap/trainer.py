"""Optimization loop: per-epoch 9:1 splits, minibatching, exact
reverse-mode gradients for every trainable parameter (network weights,
batchnorm scale/shift, kernel shape), Adam updates, and a
finite-difference gradient checker.

Within a batch, every row is a regression query but only the batch's
training rows serve as anchors; validation rows are pushed through the
network with running batchnorm statistics, mirroring how unseen grid
positions are evaluated after training.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, model as model_mod
from .errors import (
    DivergedTrainingError,
    InvalidInputError,
    TooFewPointsError,
)
from .kernels import _pairwise_sq_dists
from .model import BN_EPS, BN_MOMENTUM, ModelState, f32q


@dataclass
class TrainConfig:
    epochs: int = 20
    batch: int = 1000
    lr: float = 0.002
    lambda_: float = 0.125
    w1: float = 1.0
    w2: float = 0.3
    seed: int = 42
    ablate_kr: bool = False
    ablate_gk: bool = False
    balance: str = "none"  # 'none' | 'l1' | 'l2'
    mu: float = 2.0
    mu1: float = 1.0
    k: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 10.0
    deterministic: bool = False

    def validate(self):
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.batch < 4:
            raise InvalidInputError("batch size must be >= 4")
        if self.lr <= 0:
            raise InvalidInputError("learning rate must be positive")
        if self.lambda_ < 0:
            raise InvalidInputError("lambda must be nonnegative")
        if self.balance not in ("none", "l1", "l2"):
            raise InvalidInputError(f"unknown balance mode: {self.balance}")
        if self.balance != "none" and self.k <= 0:
            raise InvalidInputError("balance decay rate k must be positive")


@dataclass
class SplitAssignment:
    epoch: int
    seed: int
    val_mask: np.ndarray  # bool, length N


@dataclass
class EpochRecord:
    epoch: int
    mse_vl: float
    mse_tr: float
    mse_r: float
    kl: float
    total: float
    alpha: float
    beta: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def to_dicts(self):
        return [vars(r).copy() for r in self.records]


def split_epoch(n: int, seed: int, epoch: int) -> SplitAssignment:
    """Deterministic per-(seed, epoch) validation mask with round(N/10)
    entries, at least one."""
    if n < 2:
        raise TooFewPointsError(f"need at least 2 points to split, got {n}")
    n_val = max(1, round(n / 10))
    rng = np.random.default_rng([abs(int(seed)), int(epoch)])
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=n_val, replace=False)] = True
    return SplitAssignment(epoch=epoch, seed=seed, val_mask=mask)


# ---------------------------------------------------------------------------
# Forward/backward evaluation


def _evaluate(st: ModelState, X, s, val_mask, cfg: TrainConfig, P, want_grads):
    """Evaluate the composed loss on one batch; optionally backpropagate.

    Returns (LossBreakdown, grads-or-None, bn_stats). bn_stats is a list
    of (mean, unbiased var) per batchnorm layer when batch statistics were
    used, else None.
    """
    mlp = st.mlp
    X = np.asarray(X, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    b_rows = X.shape[0]
    vl = np.asarray(val_mask, dtype=bool)
    tr = ~vl
    n_tr = int(tr.sum())
    n_vl = int(vl.sum())
    bn_active = n_tr >= 2

    # Forward: three linear+BN+ReLU blocks, then a plain affine map.
    h = X
    caches = []
    for layer in range(3):
        z = h @ mlp.weights[layer].T + mlp.biases[layer]
        xhat = np.empty_like(z)
        if bn_active:
            mu, var = model_mod.bn_train_stats(z[tr])
            inv_tr = 1.0 / np.sqrt(var + BN_EPS)
            xhat[tr] = (z[tr] - mu) * inv_tr
        else:
            mu = var = inv_tr = None
        inv_run = 1.0 / np.sqrt(mlp.running_var[layer] + BN_EPS)
        rows_run = vl if bn_active else slice(None)
        xhat[rows_run] = (z[rows_run] - mlp.running_mean[layer]) * inv_run
        a = mlp.gammas[layer] * xhat + mlp.shifts[layer]
        relu_mask = a > 0
        h_next = np.where(relu_mask, a, 0.0)
        caches.append((h, xhat, mu, var, inv_tr, inv_run, relu_mask))
        h = h_next
    Y = h @ mlp.weights[3].T + mlp.biases[3]

    alpha = st.kernel.alpha
    beta = st.kernel.beta

    # The regression operates on batch-normalized coordinates, matching
    # the inference-time estimator, which regresses over the dataset's
    # normalized projection. Min-max per axis; a degenerate axis pins to
    # 0.5 (no gradient along it).
    y_min = Y.min(axis=0)
    y_span = Y.max(axis=0) - y_min
    degenerate_axis = y_span == 0.0
    safe_span = np.where(degenerate_axis, 1.0, y_span)
    Yn = (Y - y_min) / safe_span
    Yn[:, degenerate_axis] = 0.5

    # Kernel-regression estimates: queries are all rows, anchors the
    # batch's training rows only.
    have_mse = n_tr >= 1
    shat = None
    if have_mse:
        anchors = Yn[tr]
        s_anchor = s[tr]
        U = _pairwise_sq_dists(Yn, anchors)
        pos = U > 0
        logU = np.log(np.where(pos, U, 1.0))
        powb = np.exp(beta * logU)
        powb[~pos] = 0.0
        K = 1.0 / (1.0 + alpha * powb)
        den = K.sum(axis=1)
        shat = (K @ s_anchor) / den
        mse_tr_v = float(np.mean((shat[tr] - s[tr]) ** 2))
        mse_vl_v = float(np.mean((shat[vl] - s[vl]) ** 2)) if n_vl else 0.0
    else:
        mse_tr_v = 0.0
        mse_vl_v = 0.0

    if n_vl and have_mse:
        mse_r_v = cfg.w1 * mse_vl_v + cfg.w2 * mse_tr_v
    else:
        mse_r_v = cfg.w2 * mse_tr_v if have_mse else 0.0

    # Neighborhood term over the whole batch.
    have_kl = b_rows >= 4 and P is not None
    if have_kl:
        Q, W = losses.low_dim_affinities(Y)
        kl_v = losses.kl_from_affinities(P, Q)
    else:
        kl_v = 0.0

    lambda_eff = 0.0 if cfg.ablate_kr else cfg.lambda_
    breakdown = losses.total_loss(
        mse_r_v,
        kl_v,
        lambda_eff,
        balance=cfg.balance,
        mu=cfg.mu,
        mu1=cfg.mu1,
        k=cfg.k,
        mse_vl=mse_vl_v,
        mse_tr=mse_tr_v,
        w1=cfg.w1,
        w2=cfg.w2,
    )

    bn_stats = None
    if bn_active:
        bn_stats = []
        for layer in range(3):
            _, _, mu, var, _, _, _ = caches[layer]
            bn_stats.append((mu, var * n_tr / (n_tr - 1)))

    if not want_grads:
        return breakdown, None, bn_stats

    # Scalar chain factors for the composition rule.
    if cfg.balance == "none":
        d_mse = lambda_eff
        d_kl = 1.0
    elif cfg.balance == "l1":
        w = breakdown.balance_weight
        d_mse = lambda_eff
        d_kl = w + kl_v * cfg.k * w * (1.0 - w)
    else:  # l2
        w = breakdown.balance_weight
        d_mse = lambda_eff * (w + mse_r_v * cfg.k * w * (1.0 - w))
        d_kl = 1.0

    dY = np.zeros_like(Y)
    grads = {}

    d_alpha_eff = 0.0
    d_beta_eff = 0.0
    if have_mse and d_mse != 0.0:
        g_shat = np.zeros(b_rows)
        g_shat[tr] = d_mse * cfg.w2 * 2.0 * (shat[tr] - s[tr]) / n_tr
        if n_vl:
            g_shat[vl] = d_mse * cfg.w1 * 2.0 * (shat[vl] - s[vl]) / n_vl
        G = g_shat[:, None] * (s_anchor[None, :] - shat[:, None]) / den[:, None]
        K2 = K * K
        dK_du = np.zeros_like(K)
        dK_du[pos] = -alpha * beta * (powb[pos] / U[pos]) * K2[pos]
        M = G * dK_du
        row_sum = M.sum(axis=1)
        col_sum = M.sum(axis=0)
        dYn = 2.0 * (row_sum[:, None] * Yn - M @ anchors)
        dYn[tr] += 2.0 * (col_sum[:, None] * anchors - M.T @ Yn)
        d_alpha_eff = float(np.sum(G * (-powb * K2)))
        d_beta_eff = float(np.sum((G * (-alpha * powb * logU * K2))[pos]))
        # Through the per-axis min-max normalization: the extremes also
        # collect the gradient of the shared min/span.
        for axis in range(2):
            if degenerate_axis[axis]:
                continue
            g_axis = dYn[:, axis]
            u = Yn[:, axis]
            span = y_span[axis]
            dY[:, axis] += g_axis / span
            dY[int(np.argmin(Y[:, axis])), axis] += float(
                np.sum(g_axis * (u - 1.0)) / span
            )
            dY[int(np.argmax(Y[:, axis])), axis] += float(
                np.sum(g_axis * -u) / span
            )

    if have_kl and d_kl != 0.0:
        R = (P - Q) * W
        r_sum = R.sum(axis=1)
        dY += (4.0 * d_kl) * (r_sum[:, None] * Y - R @ Y)

    # Back through the network.
    grads["w3"] = dY.T @ h
    grads["b3"] = dY.sum(axis=0)
    dH = dY @ mlp.weights[3]
    for layer in range(2, -1, -1):
        h_in, xhat, mu, var, inv_tr, inv_run, relu_mask = caches[layer]
        dA = np.where(relu_mask, dH, 0.0)
        grads[f"gamma{layer}"] = (dA * xhat).sum(axis=0)
        grads[f"shift{layer}"] = dA.sum(axis=0)
        dxhat = dA * mlp.gammas[layer]
        dZ = np.empty_like(dxhat)
        if bn_active:
            dxh = dxhat[tr]
            xh = xhat[tr]
            dZ[tr] = (inv_tr / n_tr) * (
                n_tr * dxh - dxh.sum(axis=0) - xh * (dxh * xh).sum(axis=0)
            )
            dZ[vl] = dxhat[vl] * inv_run
        else:
            dZ = dxhat * inv_run
        grads[f"w{layer}"] = dZ.T @ h_in
        grads[f"b{layer}"] = dZ.sum(axis=0)
        dH = dZ @ mlp.weights[layer]

    if not cfg.ablate_gk:
        grads["alpha_raw"] = np.array([d_alpha_eff * 2.0 * st.kernel.alpha_raw])
        grads["beta_raw"] = np.array([d_beta_eff * 2.0 * st.kernel.beta_raw])

    return breakdown, grads, bn_stats


def compute_gradients(st: ModelState, batch_X, batch_s, val_mask, cfg: TrainConfig, P=None):
    """Loss breakdown plus exact gradients for every trainable parameter.

    The high-dimensional affinities P may be passed in to reuse across
    repeated evaluations of the same batch.
    """
    X = np.asarray(batch_X, dtype=np.float64)
    if P is None and X.shape[0] >= 4:
        P = losses.multiscale_affinities(X)
    breakdown, grads, bn_stats = _evaluate(
        st, X, batch_s, val_mask, cfg, P, want_grads=True
    )
    if not np.isfinite(breakdown.total):
        raise DivergedTrainingError("non-finite loss", epoch=None, batch=None)
    return breakdown, grads, bn_stats


def loss_value(st: ModelState, batch_X, batch_s, val_mask, cfg: TrainConfig, P=None):
    """Pure loss evaluation (no gradients, no state mutation)."""
    X = np.asarray(batch_X, dtype=np.float64)
    if P is None and X.shape[0] >= 4:
        P = losses.multiscale_affinities(X)
    breakdown, _, _ = _evaluate(st, X, batch_s, val_mask, cfg, P, want_grads=False)
    return breakdown


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, st: ModelState, grads: dict):
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            theta = model_mod.get_param(st, name)
            update = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            model_mod.set_param(st, name, f32q(theta - update.reshape(theta.shape)))


def clip_global_norm(grads: dict, max_norm: float):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


# ---------------------------------------------------------------------------
# Training loop


def train(dataset, cfg: TrainConfig):
    """Run the full optimization and return (model, history).

    Deterministic given cfg.seed under single-threaded evaluation. The
    returned model is left in inference mode.
    """
    cfg.validate()
    X = np.asarray(dataset.X, dtype=np.float64)
    s = np.asarray(dataset.s, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise TooFewPointsError("dataset must hold at least 2 rows")
    st = model_mod.init_model(d, cfg.seed)
    adam = AdamState(cfg)
    history = TrainHistory()
    n_batches = (n + cfg.batch - 1) // cfg.batch

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        split = split_epoch(n, cfg.seed, epoch)
        order = np.random.default_rng([abs(int(cfg.seed)), epoch, 1]).permutation(n)
        sse_vl = sse_tr = 0.0
        cnt_vl = cnt_tr = 0
        kl_acc = total_acc = 0.0
        rows_acc = 0
        for bi in range(n_batches):
            idx = order[bi * cfg.batch : (bi + 1) * cfg.batch]
            bx, bs = X[idx], s[idx]
            bmask = split.val_mask[idx]
            try:
                breakdown, grads, bn_stats = compute_gradients(st, bx, bs, bmask, cfg)
            except DivergedTrainingError as e:
                raise DivergedTrainingError(
                    f"training diverged at epoch {epoch}, batch {bi}",
                    epoch=epoch,
                    batch=bi,
                ) from e
            clip_global_norm(grads, cfg.clip_norm)
            adam.step(st, grads)
            if bn_stats is not None:
                mlp = st.mlp
                for layer, (mu, var_u) in enumerate(bn_stats):
                    mlp.running_mean[layer] = f32q(
                        (1.0 - BN_MOMENTUM) * mlp.running_mean[layer] + BN_MOMENTUM * mu
                    )
                    mlp.running_var[layer] = f32q(
                        (1.0 - BN_MOMENTUM) * mlp.running_var[layer]
                        + BN_MOMENTUM * var_u
                    )
            try:
                model_mod.check_finite_state(st)
            except InvalidInputError as e:
                raise DivergedTrainingError(
                    f"parameters diverged at epoch {epoch}, batch {bi}",
                    epoch=epoch,
                    batch=bi,
                ) from e
            n_vl_b = int(bmask.sum())
            n_tr_b = idx.size - n_vl_b
            sse_vl += breakdown.mse_vl * n_vl_b
            sse_tr += breakdown.mse_tr * n_tr_b
            cnt_vl += n_vl_b
            cnt_tr += n_tr_b
            kl_acc += breakdown.kl * idx.size
            total_acc += breakdown.total * idx.size
            rows_acc += idx.size
        mse_vl_e = sse_vl / cnt_vl if cnt_vl else 0.0
        mse_tr_e = sse_tr / cnt_tr if cnt_tr else 0.0
        history.records.append(
            EpochRecord(
                epoch=epoch,
                mse_vl=mse_vl_e,
                mse_tr=mse_tr_e,
                mse_r=cfg.w1 * mse_vl_e + cfg.w2 * mse_tr_e,
                kl=kl_acc / rows_acc,
                total=total_acc / rows_acc,
                alpha=st.kernel.alpha,
                beta=st.kernel.beta,
                seconds=time.perf_counter() - t0,
            )
        )
    st.mode = "inference"
    return st, history


# ---------------------------------------------------------------------------
# Finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    n_checked: int
    tolerance: float
    passed: bool


def grad_check(
    st: ModelState,
    X,
    s,
    cfg: TrainConfig,
    step: float = 1e-4,
    tolerance: float = 1e-3,
    val_mask=None,
    grads=None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences for
    every scalar trainable parameter.

    Relative error uses max(1e-8, |analytic| + |numeric|) as denominator.
    A precomputed gradient dict may be injected (fault testing).
    """
    X = np.asarray(X, dtype=np.float64)
    s_arr = np.asarray(s, dtype=np.float64)
    n = X.shape[0]
    if val_mask is None:
        val_mask = split_epoch(n, cfg.seed, 0).val_mask
    P = losses.multiscale_affinities(X) if n >= 4 else None
    if grads is None:
        _, grads, _ = compute_gradients(st, X, s_arr, val_mask, cfg, P=P)

    work = model_mod.clone_model(st)
    max_rel = 0.0
    worst = ""
    checked = 0
    for name in sorted(grads):
        analytic = np.asarray(grads[name], dtype=np.float64)
        param = model_mod.get_param(work, name)
        flat_g = analytic.ravel()
        flat_p = param.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            model_mod.set_param(work, name, param)
            hi = _evaluate(work, X, s_arr, val_mask, cfg, P, want_grads=False)[0].total
            flat_p[i] = orig - step
            model_mod.set_param(work, name, param)
            lo = _evaluate(work, X, s_arr, val_mask, cfg, P, want_grads=False)[0].total
            flat_p[i] = orig
            model_mod.set_param(work, name, param)
            numeric = (hi - lo) / (2.0 * step)
            denom = max(1e-8, abs(flat_g[i]) + abs(numeric))
            rel = abs(flat_g[i] - numeric) / denom
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{i}]"
    return GradCheckReport(
        max_rel_error=max_rel,
        worst_param=worst,
        n_checked=checked,
        tolerance=tolerance,
        passed=max_rel <= tolerance,
    )
