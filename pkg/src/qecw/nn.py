"""Graph neural network decoder: convolutions, pooling, heads, gradients.

Seven graph convolutions X'_i = relu(W1 X_i + sum_j e_ij W2 X_j + b)
followed by mean pooling and one sigmoid-terminated dense stack per label
head. Forward and reverse passes are written against numpy directly; the
reverse pass is the exact derivative of the forward computation and is
validated against central finite differences in 64-bit mode.

Node order is canonicalized (lexicographic on feature vectors) before any
accumulation, so head outputs are bitwise identical under permutations of
the input nodes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .data import FEATURE_DIMS
from .graphs import DetectorGraph

CONV_WIDTHS = (32, 128, 256, 512, 512, 256, 256)
DENSE_HIDDEN = (128, 128, 32)  # Table head: 256 -> 128 -> 128 -> 32 -> 1


@dataclass(frozen=True)
class ModelConfig:
    feature_mode: str
    conv_widths: tuple[int, ...] = CONV_WIDTHS
    dense_hidden: tuple[int, ...] = DENSE_HIDDEN
    # ablation switch: use the self feature X_i in the edge sum instead of
    # the neighbor feature X_j
    literal_self_message: bool = False

    @property
    def in_dim(self) -> int:
        return FEATURE_DIMS[self.feature_mode]

    @property
    def heads(self) -> tuple[str, ...]:
        # the repetition code has a single (Z) label; surface codes have two
        return ("Z",) if self.feature_mode == "repetition" else ("Z", "X")


class Model:
    """Parameter container; numerically plain, dtype float32 or float64."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self.param_names = sorted(params)

    @property
    def dtype(self):
        return self.params[self.param_names[0]].dtype

    def astype(self, dtype) -> "Model":
        return Model(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def _layer_dims(config: ModelConfig) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    conv_dims = []
    d = config.in_dim
    for w in config.conv_widths:
        conv_dims.append((d, w))
        d = w
    dense_dims = []
    for w in config.dense_hidden:
        dense_dims.append((d, w))
        d = w
    dense_dims.append((d, 1))
    return conv_dims, dense_dims


def init_model(feature_mode: str, seed: int, dtype=np.float32,
               config: ModelConfig | None = None) -> Model:
    """He-normal weights (variance 2/d_in), zero biases, Philox-seeded."""
    cfg = config or ModelConfig(feature_mode=feature_mode)
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0x6d6f64656c]))
    conv_dims, dense_dims = _layer_dims(cfg)
    params: dict[str, np.ndarray] = {}
    for k, (din, dout) in enumerate(conv_dims):
        std = np.sqrt(2.0 / din)
        params[f"conv{k}.W1"] = rng.normal(0.0, std, (dout, din)).astype(dtype)
        params[f"conv{k}.W2"] = rng.normal(0.0, std, (dout, din)).astype(dtype)
        params[f"conv{k}.b"] = np.zeros(dout, dtype=dtype)
    for h, head in enumerate(cfg.heads):
        for k, (din, dout) in enumerate(dense_dims):
            std = np.sqrt(2.0 / din)
            params[f"head{head}.dense{k}.W"] = rng.normal(0.0, std, (dout, din)).astype(dtype)
            params[f"head{head}.dense{k}.b"] = np.zeros(dout, dtype=dtype)
    return Model(cfg, params)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values at {name}")


@dataclass
class _Assembled:
    feats: np.ndarray          # (N, in_dim) canonical order
    adj: sp.csr_matrix | None  # symmetric weighted adjacency, None if no edges
    starts: np.ndarray         # per-graph node offsets (G,)
    counts: np.ndarray         # nodes per graph (G,)


def assemble_batch(graphs: list[DetectorGraph], dtype) -> _Assembled:
    """Stack non-empty graphs into one block-diagonal adjacency problem."""
    if any(g.n_nodes == 0 for g in graphs):
        raise ValueError("empty graph in batch; empty graphs decode to 0 directly")
    feats_list = []
    rows, cols, vals = [], [], []
    starts = np.zeros(len(graphs), dtype=np.int64)
    counts = np.zeros(len(graphs), dtype=np.int64)
    off = 0
    for gi, g in enumerate(graphs):
        f = g.features.astype(dtype)
        perm = np.lexsort(f.T[::-1])  # canonical order, primary key column 0
        inv = np.empty(g.n_nodes, dtype=np.int64)
        inv[perm] = np.arange(g.n_nodes)
        feats_list.append(f[perm])
        if g.n_edges:
            e0 = inv[g.edges[:, 0]] + off
            e1 = inv[g.edges[:, 1]] + off
            w = g.weights.astype(dtype)
            rows.extend((e0, e1))
            cols.extend((e1, e0))
            vals.extend((w, w))
        starts[gi] = off
        counts[gi] = g.n_nodes
        off += g.n_nodes
    feats = np.concatenate(feats_list, axis=0)
    if rows:
        adj = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(off, off), dtype=dtype,
        )
        adj.sort_indices()
    else:
        adj = None
    return _Assembled(feats, adj, starts, counts)


def _neighbor_sum(asm: _Assembled, X: np.ndarray, literal: bool) -> np.ndarray:
    if asm.adj is None:
        return np.zeros_like(X)
    if literal:
        rowsum = np.asarray(asm.adj.sum(axis=1)).reshape(-1, 1).astype(X.dtype)
        return rowsum * X
    return asm.adj @ X


def forward(model: Model, asm: _Assembled) -> tuple[np.ndarray, list]:
    """Run conv stack, pooling and heads; returns (logits (G, heads), caches)."""
    cfg = model.config
    p = model.params
    X = asm.feats
    _check_finite("input", X)
    conv_caches = []
    for k in range(len(cfg.conv_widths)):
        S = _neighbor_sum(asm, X, cfg.literal_self_message)
        Z = X @ p[f"conv{k}.W1"].T + S @ p[f"conv{k}.W2"].T + p[f"conv{k}.b"]
        mask = Z > 0
        out = np.where(mask, Z, 0.0).astype(X.dtype)
        _check_finite(f"conv{k}", out)
        conv_caches.append((X, S, mask))
        X = out

    sums = np.add.reduceat(X, asm.starts, axis=0)
    pooled = sums / asm.counts[:, None].astype(X.dtype)

    n_dense = len(cfg.dense_hidden) + 1
    logits = np.zeros((len(asm.counts), len(cfg.heads)), dtype=X.dtype)
    head_caches = []
    for h, head in enumerate(cfg.heads):
        hx = pooled
        caches = []
        for k in range(n_dense):
            Z = hx @ p[f"head{head}.dense{k}.W"].T + p[f"head{head}.dense{k}.b"]
            if k < n_dense - 1:
                mask = Z > 0
                out = np.where(mask, Z, 0.0).astype(hx.dtype)
            else:
                mask = None
                out = Z
            _check_finite(f"head{head}.dense{k}", out)
            caches.append((hx, mask))
            hx = out
        logits[:, h] = hx[:, 0]
        head_caches.append(caches)
    return logits, [conv_caches, head_caches, pooled]


def backward(model: Model, asm: _Assembled, caches: list,
             dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse pass for the loss gradient dL/dlogits."""
    cfg = model.config
    p = model.params
    conv_caches, head_caches, pooled = caches
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    n_dense = len(cfg.dense_hidden) + 1

    dpooled = np.zeros_like(pooled)
    for h, head in enumerate(cfg.heads):
        dh = dlogits[:, h:h + 1].astype(pooled.dtype)
        for k in range(n_dense - 1, -1, -1):
            hx, mask = head_caches[h][k]
            dz = dh if mask is None else np.where(mask, dh, 0.0)
            grads[f"head{head}.dense{k}.W"] += dz.T @ hx
            grads[f"head{head}.dense{k}.b"] += dz.sum(axis=0)
            dh = dz @ p[f"head{head}.dense{k}.W"]
        dpooled += dh

    counts = asm.counts[:, None].astype(pooled.dtype)
    dX = np.repeat(dpooled / counts, asm.counts, axis=0)

    for k in range(len(cfg.conv_widths) - 1, -1, -1):
        X, S, mask = conv_caches[k]
        dz = np.where(mask, dX, 0.0)
        grads[f"conv{k}.W1"] += dz.T @ X
        grads[f"conv{k}.W2"] += dz.T @ S
        grads[f"conv{k}.b"] += dz.sum(axis=0)
        dX = dz @ p[f"conv{k}.W1"]
        dmsg = dz @ p[f"conv{k}.W2"]
        if asm.adj is not None:
            if cfg.literal_self_message:
                rowsum = np.asarray(asm.adj.sum(axis=1)).reshape(-1, 1).astype(dX.dtype)
                dX += rowsum * dmsg
            else:
                dX += asm.adj @ dmsg  # adjacency is symmetric
    return grads


@dataclass
class BatchItem:
    """One training example: graph plus (possibly soft) per-head targets.

    y_z / y_x are None for masked heads; weight scales this item's
    contribution, which lets the harness collapse duplicate graphs.
    """

    graph: DetectorGraph
    y_z: float | None
    y_x: float | None
    weight: float = 1.0


def items_from_graphs(graphs: list[DetectorGraph]) -> list[BatchItem]:
    return [
        BatchItem(g, None if g.lam_z is None else float(g.lam_z),
                  None if g.lam_x is None else float(g.lam_x))
        for g in graphs
    ]


def loss_and_grads(model: Model, items: list[BatchItem]
                   ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Masked binary cross entropy over (graph, available-head) pairs.

    Returns (loss, gradients, probabilities). The loss is the weighted mean
    over available pairs; heads without a label contribute exactly zero
    loss and zero gradient.
    """
    cfg = model.config
    heads = cfg.heads
    targets = np.full((len(items), len(heads)), np.nan)
    weights = np.array([it.weight for it in items], dtype=np.float64)
    for i, it in enumerate(items):
        for h, head in enumerate(heads):
            y = it.y_z if head == "Z" else it.y_x
            if y is not None:
                targets[i, h] = y

    avail = ~np.isnan(targets)
    total_w = float((weights[:, None] * avail).sum())
    if total_w <= 0.0:
        raise ValueError("batch carries no available labels")

    asm = assemble_batch([it.graph for it in items], model.dtype)
    logits, caches = forward(model, asm)
    z = logits.astype(np.float64)
    probs = 1.0 / (1.0 + np.exp(-z))

    y = np.where(avail, targets, 0.0)
    # stable BCE on logits: softplus(z) - y z
    per_pair = np.where(avail, np.logaddexp(0.0, z) - y * z, 0.0)
    loss = float((weights[:, None] * per_pair).sum() / total_w)

    dlogits = np.where(avail, probs - y, 0.0) * weights[:, None] / total_w
    grads = backward(model, asm, caches, dlogits.astype(model.dtype))
    return loss, grads, probs


def predict_proba(model: Model, graphs: list[DetectorGraph],
                  batch_size: int = 8192) -> np.ndarray:
    """Per-head probabilities; empty graphs output 0 without network evaluation."""
    n_heads = len(model.config.heads)
    out = np.zeros((len(graphs), n_heads), dtype=np.float64)
    nonempty = [i for i, g in enumerate(graphs) if g.n_nodes > 0]
    for lo in range(0, len(nonempty), batch_size):
        idx = nonempty[lo:lo + batch_size]
        asm = assemble_batch([graphs[i] for i in idx], model.dtype)
        logits, _ = forward(model, asm)
        out[idx] = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
    return out


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(model: Model, lr: float = 1e-4) -> AdamState:
    return AdamState(
        lr=lr,
        m={k: np.zeros_like(p) for k, p in model.params.items()},
        v={k: np.zeros_like(p) for k, p in model.params.items()},
    )


def adam_step(state: AdamState, model: Model, grads: dict[str, np.ndarray]) -> None:
    """Bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for k in model.param_names:
        g = grads[k]
        if g.shape != model.params[k].shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        mhat = state.m[k] / corr1
        vhat = state.v[k] / corr2
        model.params[k] -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(
            model.params[k].dtype)


# ---------------------------------------------------------------------------
# checkpoint format: little-endian binary, bit-exact round trip
#   magic "QGNW", u16 version, u8 mode, u8 flags, u8 dtype, u16 n_dense2
#   u32 param count, then per param: u16 name len, name, u8 ndim, u32 dims,
#   raw data; then u8 adam flag and, if set, u64 step + f64 lr + moment arrays.

_MAGIC = b"QGNW"
_VERSION = 1
_MODE_CODES = {"circuit-surface": 0, "perfect-surface": 1, "repetition": 2}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


def _write_array(f, arr: np.ndarray) -> None:
    f.write(struct.pack("<B", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(b"d" if arr.dtype == np.float64 else b"f")
    f.write(np.ascontiguousarray(arr, dtype=f"<f{arr.itemsize}").tobytes())


def _read_array(f) -> np.ndarray:
    ndim = struct.unpack("<B", f.read(1))[0]
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    code = f.read(1)
    dtype = np.dtype("<f8") if code == b"d" else np.dtype("<f4")
    n = int(np.prod(shape)) if shape else 1
    data = f.read(n * dtype.itemsize)
    if len(data) != n * dtype.itemsize:
        raise CheckpointError("truncated parameter block")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


class CheckpointError(IOError):
    pass


def save_checkpoint(path, model: Model, adam: AdamState | None = None) -> None:
    cfg = model.config
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<H", _VERSION))
        f.write(struct.pack("<B", _MODE_CODES[cfg.feature_mode]))
        flags = 1 if cfg.literal_self_message else 0
        f.write(struct.pack("<B", flags))
        f.write(struct.pack("<B", 1 if model.dtype == np.float64 else 0))
        f.write(struct.pack("<H", len(cfg.conv_widths)))
        f.write(struct.pack(f"<{len(cfg.conv_widths)}I", *cfg.conv_widths))
        f.write(struct.pack("<H", len(cfg.dense_hidden)))
        f.write(struct.pack(f"<{len(cfg.dense_hidden)}I", *cfg.dense_hidden))
        f.write(struct.pack("<I", len(model.param_names)))
        for name in model.param_names:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            _write_array(f, model.params[name])
        if adam is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(struct.pack("<Q", adam.step))
            f.write(struct.pack("<d", adam.lr))
            for name in model.param_names:
                _write_array(f, adam.m[name])
            for name in model.param_names:
                _write_array(f, adam.v[name])


def load_checkpoint(path) -> tuple[Model, AdamState | None]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}")
        version = struct.unpack("<H", f.read(2))[0]
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        mode = _MODE_NAMES[struct.unpack("<B", f.read(1))[0]]
        flags = struct.unpack("<B", f.read(1))[0]
        struct.unpack("<B", f.read(1))[0]  # dtype code, recovered from arrays
        ncw = struct.unpack("<H", f.read(2))[0]
        conv_widths = struct.unpack(f"<{ncw}I", f.read(4 * ncw))
        ndw = struct.unpack("<H", f.read(2))[0]
        dense_hidden = struct.unpack(f"<{ndw}I", f.read(4 * ndw))
        cfg = ModelConfig(feature_mode=mode, conv_widths=conv_widths,
                          dense_hidden=dense_hidden,
                          literal_self_message=bool(flags & 1))
        n_params = struct.unpack("<I", f.read(4))[0]
        params = {}
        for _ in range(n_params):
            ln = struct.unpack("<H", f.read(2))[0]
            name = f.read(ln).decode()
            params[name] = _read_array(f)
        model = Model(cfg, params)
        has_adam = struct.unpack("<B", f.read(1))[0]
        adam = None
        if has_adam:
            step = struct.unpack("<Q", f.read(8))[0]
            lr = struct.unpack("<d", f.read(8))[0]
            m = {name: _read_array(f) for name in model.param_names}
            v = {name: _read_array(f) for name in model.param_names}
            adam = AdamState(lr=lr, step=step, m=m, v=v)
        return model, adam
