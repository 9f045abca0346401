"""Projection network state and forward evaluation.

The projection is a 4-layer MLP: the first three layers map d -> d and
apply batch normalization followed by ReLU; the final layer is a plain
affine map d -> 2 so the output can span the whole plane. The learnable
kernel shape lives next to the network because both are optimized
jointly.

All parameters are float64 arrays holding float32-representable values:
every mutation is quantized through float32, which keeps the on-disk
checkpoint format (32-bit floats) lossless against the in-memory state.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmallError, InvalidDimensionError, InvalidInputError
from .kernels import KernelParams

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
N_LAYERS = 4


def f32q(a):
    """Round to the nearest float32 value, kept in float64 storage."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class MlpParams:
    weights: list  # 4 arrays, out_dim x in_dim
    biases: list  # 4 vectors
    gammas: list  # 3 batchnorm scale vectors
    shifts: list  # 3 batchnorm shift vectors
    running_mean: list  # 3 vectors
    running_var: list  # 3 vectors


@dataclass
class ModelState:
    mlp: MlpParams
    kernel: KernelParams
    input_dim: int
    mode: str = "train"  # 'train' | 'inference'
    seed: int = 0


def layer_dims(d: int):
    return [(d, d), (d, d), (d, d), (d, 2)]


def init_model(d: int, seed: int) -> ModelState:
    """Deterministic init: uniform fan-in weights, identity batchnorm,
    kernel raw parameters at 1 (the plain t-kernel)."""
    if d < 2:
        raise InvalidDimensionError(f"input dimension must be >= 2, got {d}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for in_dim, out_dim in layer_dims(d):
        bound = 1.0 / np.sqrt(in_dim)
        weights.append(f32q(rng.uniform(-bound, bound, size=(out_dim, in_dim))))
        biases.append(f32q(np.zeros(out_dim)))
    mlp = MlpParams(
        weights=weights,
        biases=biases,
        gammas=[f32q(np.ones(d)) for _ in range(3)],
        shifts=[f32q(np.zeros(d)) for _ in range(3)],
        running_mean=[f32q(np.zeros(d)) for _ in range(3)],
        running_var=[f32q(np.ones(d)) for _ in range(3)],
    )
    return ModelState(
        mlp=mlp, kernel=KernelParams(1.0, 1.0), input_dim=d, mode="train", seed=seed
    )


def check_finite_state(model: ModelState):
    """Raise if any parameter or running statistic is non-finite, or a
    running variance is not strictly positive."""
    mlp = model.mlp
    for group in (mlp.weights, mlp.biases, mlp.gammas, mlp.shifts, mlp.running_mean):
        for a in group:
            if not np.all(np.isfinite(a)):
                raise InvalidInputError("non-finite model parameter")
    for v in mlp.running_var:
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInputError("running variance must be finite and positive")
    if not (np.isfinite(model.kernel.alpha_raw) and np.isfinite(model.kernel.beta_raw)):
        raise InvalidInputError("non-finite kernel parameter")


def _validate_batch(model: ModelState, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("input batch must be a nonempty 2D array")
    if X.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"expected {model.input_dim} features, got {X.shape[1]}"
        )
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("input batch contains non-finite values")
    return X


def bn_train_stats(z):
    """Batch mean and biased variance per feature."""
    mu = z.mean(axis=0)
    var = z.var(axis=0)
    return mu, var


def forward(model: ModelState, X) -> np.ndarray:
    """Map a batch of d-dimensional rows to 2D coordinates.

    Train mode normalizes with batch statistics (batch size >= 2 required)
    and never mutates running statistics; inference mode normalizes with
    the stored running statistics so each row's output is independent of
    the rest of the batch.
    """
    X = _validate_batch(model, X)
    train_mode = model.mode == "train"
    if train_mode and X.shape[0] < 2:
        raise BatchTooSmallError("train-mode forward needs a batch of >= 2 rows")
    mlp = model.mlp
    h = X
    for layer in range(3):
        z = h @ mlp.weights[layer].T + mlp.biases[layer]
        if train_mode:
            mu, var = bn_train_stats(z)
        else:
            mu, var = mlp.running_mean[layer], mlp.running_var[layer]
        xhat = (z - mu) / np.sqrt(var + BN_EPS)
        a = mlp.gammas[layer] * xhat + mlp.shifts[layer]
        h = np.maximum(a, 0.0)
    return h @ mlp.weights[3].T + mlp.biases[3]


# ---------------------------------------------------------------------------
# Flat parameter views, shared by the optimizer and the gradient checker.

PARAM_ORDER = (
    [f"w{i}" for i in range(4)]
    + [f"b{i}" for i in range(4)]
    + [f"gamma{i}" for i in range(3)]
    + [f"shift{i}" for i in range(3)]
    + ["alpha_raw", "beta_raw"]
)


def get_param(model: ModelState, name: str):
    mlp = model.mlp
    if name.startswith("w"):
        return mlp.weights[int(name[1:])]
    if name.startswith("b") and name != "beta_raw":
        return mlp.biases[int(name[1:])]
    if name.startswith("gamma"):
        return mlp.gammas[int(name[5:])]
    if name.startswith("shift"):
        return mlp.shifts[int(name[5:])]
    if name == "alpha_raw":
        return np.array([model.kernel.alpha_raw])
    if name == "beta_raw":
        return np.array([model.kernel.beta_raw])
    raise KeyError(name)


def set_param(model: ModelState, name: str, value):
    mlp = model.mlp
    if name == "alpha_raw":
        model.kernel.alpha_raw = float(value.reshape(())) if hasattr(value, "reshape") else float(value)
        return
    if name == "beta_raw":
        model.kernel.beta_raw = float(value.reshape(())) if hasattr(value, "reshape") else float(value)
        return
    if name.startswith("w"):
        mlp.weights[int(name[1:])] = value
    elif name.startswith("b"):
        mlp.biases[int(name[1:])] = value
    elif name.startswith("gamma"):
        mlp.gammas[int(name[5:])] = value
    elif name.startswith("shift"):
        mlp.shifts[int(name[5:])] = value
    else:
        raise KeyError(name)


def clone_model(model: ModelState) -> ModelState:
    mlp = model.mlp
    cloned = MlpParams(
        weights=[w.copy() for w in mlp.weights],
        biases=[b.copy() for b in mlp.biases],
        gammas=[g.copy() for g in mlp.gammas],
        shifts=[s.copy() for s in mlp.shifts],
        running_mean=[m.copy() for m in mlp.running_mean],
        running_var=[v.copy() for v in mlp.running_var],
    )
    return ModelState(
        mlp=cloned,
        kernel=KernelParams(model.kernel.alpha_raw, model.kernel.beta_raw),
        input_dim=model.input_dim,
        mode=model.mode,
        seed=model.seed,
    )


def models_equal(a: ModelState, b: ModelState) -> bool:
    """Bitwise equality of every parameter and running statistic."""
    for name in PARAM_ORDER:
        if not np.array_equal(get_param(a, name), get_param(b, name)):
            return False
    for ra, rb in zip(a.mlp.running_mean, b.mlp.running_mean):
        if not np.array_equal(ra, rb):
            return False
    for va, vb in zip(a.mlp.running_var, b.mlp.running_var):
        if not np.array_equal(va, vb):
            return False
    return a.input_dim == b.input_dim and a.seed == b.seed
