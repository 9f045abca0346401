"""Dataset, checkpoint, and configuration file formats.

Binary dataset ("AKRM"): magic, u32 version, u64 N, u64 d, N*d
little-endian f32 embeddings row-major, N little-endian f32 scores, then
one presence byte per optional block (ids, metadata), each block holding
N u32-length-prefixed UTF-8 strings.

Checkpoint ("AKRC"): magic, u32 version, u64 d, i64 seed, u8 mode, u8
layer count, raw kernel parameters, then all layer parameters and
batchnorm running statistics as little-endian f32. Model parameters are
kept float32-representable in memory, so save -> load -> forward is
bit-identical to the pre-save model.
"""

import csv
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadHeaderError,
    BadMagicError,
    DimensionMismatchError,
    DuplicateIdError,
    InvalidInputError,
    NanPayloadError,
    TooFewRowsError,
    TruncatedFileError,
    VersionMismatchError,
)
from .kernels import KernelParams
from .model import MlpParams, ModelState, layer_dims

DATASET_MAGIC = b"AKRM"
CHECKPOINT_MAGIC = b"AKRC"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    X: np.ndarray  # N x d float32
    s: np.ndarray  # N float32
    ids: list | None = None
    meta: list | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def row_id(self, i: int) -> str:
        return self.ids[i] if self.ids is not None else str(i)


def make_dataset(X, s, ids=None, meta=None) -> Dataset:
    """Validate and assemble a dataset (float32 storage)."""
    X = np.ascontiguousarray(X, dtype=np.float32)
    s = np.ascontiguousarray(s, dtype=np.float32)
    if X.ndim != 2:
        raise InvalidInputError("embeddings must be a 2D array")
    if X.shape[0] < 2:
        raise TooFewRowsError(f"need at least 2 rows, got {X.shape[0]}")
    if s.shape != (X.shape[0],):
        raise InvalidInputError("scores must align with embedding rows")
    bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(s)
    if bad.any():
        row = int(np.argmax(bad))
        raise NanPayloadError(f"non-finite value in row {row}", row=row)
    if ids is not None:
        ids = [str(v) for v in ids]
        if len(ids) != X.shape[0]:
            raise InvalidInputError("ids must align with rows")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("row ids must be unique")
    if meta is not None:
        meta = [str(v) for v in meta]
        if len(meta) != X.shape[0]:
            raise InvalidInputError("metadata must align with rows")
    return Dataset(X=X, s=s, ids=ids, meta=meta)


def _write_str_block(fh, items):
    for text in items:
        raw = text.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def _read_exact(fh, size, what):
    raw = fh.read(size)
    if len(raw) != size:
        raise TruncatedFileError(f"file ended while reading {what}")
    return raw


def _read_str_block(fh, n):
    items = []
    for _ in range(n):
        (length,) = struct.unpack("<I", _read_exact(fh, 4, "string length"))
        items.append(_read_exact(fh, length, "string payload").decode("utf-8"))
    return items


def save_dataset(ds: Dataset, path):
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<QQ", ds.n, ds.d))
        fh.write(ds.X.astype("<f4").tobytes(order="C"))
        fh.write(ds.s.astype("<f4").tobytes(order="C"))
        fh.write(struct.pack("<B", 1 if ds.ids is not None else 0))
        if ds.ids is not None:
            _write_str_block(fh, ds.ids)
        fh.write(struct.pack("<B", 1 if ds.meta is not None else 0))
        if ds.meta is not None:
            _write_str_block(fh, ds.meta)


def _load_binary_dataset(fh) -> Dataset:
    magic = _read_exact(fh, 4, "magic")
    if magic != DATASET_MAGIC:
        raise BadMagicError(f"expected dataset magic {DATASET_MAGIC!r}, got {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported dataset version {version}")
    n, d = struct.unpack("<QQ", _read_exact(fh, 16, "dimensions"))
    if n < 2:
        raise TooFewRowsError(f"need at least 2 rows, got {n}")
    if d < 1:
        raise BadHeaderError("dimension must be >= 1")
    X = (
        np.frombuffer(_read_exact(fh, 4 * n * d, "embeddings"), dtype="<f4")
        .reshape(n, d)
        .astype(np.float32)
    )
    s = np.frombuffer(_read_exact(fh, 4 * n, "scores"), dtype="<f4").astype(np.float32)
    (has_ids,) = struct.unpack("<B", _read_exact(fh, 1, "id flag"))
    ids = _read_str_block(fh, n) if has_ids else None
    (has_meta,) = struct.unpack("<B", _read_exact(fh, 1, "metadata flag"))
    meta = _read_str_block(fh, n) if has_meta else None
    return make_dataset(X, s, ids, meta)


def _load_csv_dataset(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeaderError("empty CSV file") from None
    header = [h.strip() for h in header]
    d = 0
    while d < len(header) and header[d] == f"e{d}":
        d += 1
    if d == 0 or d >= len(header) or header[d] != "score":
        raise BadHeaderError("expected columns e0..e{d-1}, score[, id][, meta]")
    rest = header[d + 1 :]
    if rest in ([], ["id"], ["meta"], ["id", "meta"]):
        has_id = "id" in rest
        has_meta = "meta" in rest
    else:
        raise BadHeaderError(f"unexpected trailing columns: {rest}")
    expected = d + 1 + int(has_id) + int(has_meta)
    xs, ss, ids, meta = [], [], [], []
    for row_no, row in enumerate(reader):
        if not row:
            continue
        if len(row) != expected:
            raise BadHeaderError(f"row {row_no} has {len(row)} fields, expected {expected}")
        try:
            vec = [float(v) for v in row[:d]]
            score = float(row[d])
        except ValueError:
            raise NanPayloadError(f"unparsable number in row {row_no}", row=row_no) from None
        if not all(np.isfinite(vec)) or not np.isfinite(score):
            raise NanPayloadError(f"non-finite value in row {row_no}", row=row_no)
        xs.append(vec)
        ss.append(score)
        if has_id:
            ids.append(row[d + 1])
        if has_meta:
            meta.append(row[d + 1 + int(has_id)])
    if len(xs) < 2:
        raise TooFewRowsError(f"need at least 2 rows, got {len(xs)}")
    return make_dataset(
        np.asarray(xs, dtype=np.float32),
        np.asarray(ss, dtype=np.float32),
        ids if has_id else None,
        meta if has_meta else None,
    )


def save_dataset_csv(ds: Dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"e{i}" for i in range(ds.d)] + ["score"]
        if ds.ids is not None:
            header.append("id")
        if ds.meta is not None:
            header.append("meta")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.s[i]))]
            if ds.ids is not None:
                row.append(ds.ids[i])
            if ds.meta is not None:
                row.append(ds.meta[i])
            writer.writerow(row)


def load_dataset(path) -> Dataset:
    """Load a dataset, auto-detecting binary vs CSV by magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == DATASET_MAGIC:
            return _load_binary_dataset(fh)
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise BadMagicError("file is neither a binary dataset nor UTF-8 CSV") from None
    return _load_csv_dataset(text)


# ---------------------------------------------------------------------------
# Checkpoints


def _write_f32(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes(order="C"))


def _read_f32(fh, shape, what):
    count = int(np.prod(shape))
    raw = _read_exact(fh, 4 * count, what)
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def save_checkpoint(st: ModelState, path):
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", st.input_dim))
        fh.write(struct.pack("<q", st.seed))
        fh.write(struct.pack("<B", 1 if st.mode == "inference" else 0))
        fh.write(struct.pack("<B", 4))
        fh.write(struct.pack("<ff", np.float32(st.kernel.alpha_raw), np.float32(st.kernel.beta_raw)))
        for layer in range(4):
            _write_f32(fh, st.mlp.weights[layer])
            _write_f32(fh, st.mlp.biases[layer])
        for layer in range(3):
            _write_f32(fh, st.mlp.gammas[layer])
            _write_f32(fh, st.mlp.shifts[layer])
            _write_f32(fh, st.mlp.running_mean[layer])
            _write_f32(fh, st.mlp.running_var[layer])


def load_checkpoint(path, expect_d: int | None = None) -> ModelState:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(f"expected checkpoint magic {CHECKPOINT_MAGIC!r}, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"unsupported checkpoint version {version}")
        (d,) = struct.unpack("<Q", _read_exact(fh, 8, "dimension"))
        (seed,) = struct.unpack("<q", _read_exact(fh, 8, "seed"))
        (mode_flag,) = struct.unpack("<B", _read_exact(fh, 1, "mode"))
        (n_layers,) = struct.unpack("<B", _read_exact(fh, 1, "layer count"))
        if n_layers != 4:
            raise BadHeaderError(f"expected 4 layers, got {n_layers}")
        if expect_d is not None and d != expect_d:
            raise DimensionMismatchError(
                f"checkpoint was trained with d={d}, dataset has d={expect_d}"
            )
        alpha_raw, beta_raw = struct.unpack("<ff", _read_exact(fh, 8, "kernel parameters"))
        weights, biases = [], []
        for in_dim, out_dim in layer_dims(int(d)):
            weights.append(_read_f32(fh, (out_dim, in_dim), "weights"))
            biases.append(_read_f32(fh, (out_dim,), "biases"))
        gammas, shifts, r_mean, r_var = [], [], [], []
        for _ in range(3):
            gammas.append(_read_f32(fh, (int(d),), "batchnorm scale"))
            shifts.append(_read_f32(fh, (int(d),), "batchnorm shift"))
            r_mean.append(_read_f32(fh, (int(d),), "running mean"))
            r_var.append(_read_f32(fh, (int(d),), "running variance"))
        if fh.read(1):
            raise TruncatedFileError("unexpected trailing bytes in checkpoint")
    mlp = MlpParams(
        weights=weights,
        biases=biases,
        gammas=gammas,
        shifts=shifts,
        running_mean=r_mean,
        running_var=r_var,
    )
    return ModelState(
        mlp=mlp,
        kernel=KernelParams(float(alpha_raw), float(beta_raw)),
        input_dim=int(d),
        mode="inference" if mode_flag else "train",
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Flat key-value config files (JSON object mirroring TrainConfig fields)


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump({k: v for k, v in vars(cfg).items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path, cls):
    with open(path) as fh:
        data = json.load(fh)
    return cls(**data)
