"""Minimal differentiable core: MLPs, an attentive message-passing network,
and Adam, with hand-written reverse-mode gradients over numpy arrays.

The architecture set is fixed (this is not a general autodiff system): every
forward function has a ``*_cached`` variant whose cache feeds the matching
backward function.  All arrays are float64; layer boundaries reject non-finite
values.  Aggregation and edge orders are canonicalized so repeated runs are
bit-identical.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Dense",
    "MLPParams",
    "GNNLayerParams",
    "GNNParams",
    "AdamState",
    "check_finite",
    "init_dense",
    "init_mlp",
    "init_gnn",
    "named_arrays",
    "map_arrays",
    "dense_forward",
    "mlp_forward",
    "mlp_forward_cached",
    "mlp_backward",
    "canonical_directed_edges",
    "gnn_forward",
    "gnn_forward_cached",
    "gnn_backward",
    "adam_init",
    "adam_step",
    "save_arrays",
    "load_arrays",
    "sigmoid",
    "log_sigmoid",
]


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf")
    return x


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """log(sigmoid(z)) without overflow: -softplus(-z)."""
    return -np.logaddexp(0.0, -z)


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class Dense:
    w: np.ndarray  # (n_in, n_out)
    b: np.ndarray  # (n_out,)


@dataclass
class MLPParams:
    """Affine layers with rectifier activations between them, linear output."""

    layers: list[Dense]

    @property
    def n_in(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def n_out(self) -> int:
        return self.layers[-1].w.shape[1]


@dataclass
class GNNLayerParams:
    msg: MLPParams
    att: MLPParams
    upd: MLPParams


@dataclass
class GNNParams:
    layers: list[GNNLayerParams]

    @property
    def width(self) -> int:
        return self.layers[0].upd.n_out


def init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> Dense:
    s = np.sqrt(6.0 / (n_in + n_out))
    return Dense(rng.uniform(-s, s, size=(n_in, n_out)), np.zeros(n_out))


def init_mlp(rng: np.random.Generator, sizes: Sequence[int]) -> MLPParams:
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output sizes")
    return MLPParams([init_dense(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)])


def init_gnn(rng: np.random.Generator, width: int, n_layers: int = 7) -> GNNParams:
    """Message-passing stack; message/attention/update nets use one hidden layer each."""
    layers = []
    for _ in range(n_layers):
        layers.append(
            GNNLayerParams(
                msg=init_mlp(rng, (2 * width, width, width)),
                att=init_mlp(rng, (2 * width, width, width)),
                upd=init_mlp(rng, (2 * width, width, width)),
            )
        )
    return GNNParams(layers)


# ---------------------------------------------------------------------------
# generic parameter-tree traversal (deterministic order: declaration order)


def named_arrays(obj, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
    """Depth-first (name, array) pairs over dataclasses, lists/tuples and dicts."""
    if isinstance(obj, np.ndarray):
        yield prefix or "param", obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            yield from named_arrays(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_arrays(item, f"{prefix}[{i}]")
    elif isinstance(obj, dict):
        for k in sorted(obj):
            yield from named_arrays(obj[k], f"{prefix}[{k}]")
    # scalars / strings carry no parameters


def map_arrays(fn, obj):
    """Rebuild a parameter tree with ``fn`` applied to every array leaf."""
    if isinstance(obj, np.ndarray):
        return fn(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return type(obj)(**{f.name: map_arrays(fn, getattr(obj, f.name)) for f in dataclasses.fields(obj)})
    if isinstance(obj, list):
        return [map_arrays(fn, x) for x in obj]
    if isinstance(obj, tuple):
        return tuple(map_arrays(fn, x) for x in obj)
    if isinstance(obj, dict):
        return {k: map_arrays(fn, v) for k, v in obj.items()}
    return obj


# ---------------------------------------------------------------------------
# dense / MLP


def dense_forward(p: Dense, x: np.ndarray) -> np.ndarray:
    return x @ p.w + p.b


def mlp_forward(p: MLPParams, x: np.ndarray) -> np.ndarray:
    y, _ = mlp_forward_cached(p, x)
    return y


def mlp_forward_cached(p: MLPParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.n_in:
        raise ValueError(f"expected input with {p.n_in} columns, got shape {x.shape}")
    check_finite(x, "mlp input")
    cache = [x]
    h = x
    for i, layer in enumerate(p.layers):
        h = dense_forward(layer, h)
        if i < len(p.layers) - 1:
            h = np.maximum(h, 0.0)
        cache.append(h)
    check_finite(h, "mlp output")
    return h, cache


def mlp_backward(p: MLPParams, cache: list[np.ndarray], dy: np.ndarray) -> tuple[np.ndarray, MLPParams]:
    """Gradients of a scalar loss wrt the MLP input and parameters."""
    grads = [Dense(np.zeros_like(l.w), np.zeros_like(l.b)) for l in p.layers]
    g = np.asarray(dy, dtype=np.float64)
    for i in range(len(p.layers) - 1, -1, -1):
        if i < len(p.layers) - 1:
            g = g * (cache[i + 1] > 0)
        x_in = cache[i]
        grads[i].w += x_in.T @ g
        grads[i].b += g.sum(axis=0)
        g = g @ p.layers[i].w.T
    return g, MLPParams(grads)


# ---------------------------------------------------------------------------
# attentive message passing


def canonical_directed_edges(edges: Iterable[tuple[int, int]], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Expand undirected pairs to both directions (self-loops once), deduplicate,
    and sort by (receiver, sender) so float accumulation order is reproducible."""
    directed = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u},{v}) out of range for {n} nodes")
        directed.add((u, v))
        directed.add((v, u))
    ordered = sorted(directed)
    if not ordered:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.array([e[0] for e in ordered], dtype=np.int64)
    dst = np.array([e[1] for e in ordered], dtype=np.int64)
    return src, dst


def _scatter_rows(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Row-wise scatter-add, channel by channel via bincount (deterministic)."""
    out = np.zeros((n, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(index, weights=values[:, c], minlength=n)
    return out


def gnn_forward(p: GNNParams, feats: np.ndarray, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    h, _ = gnn_forward_cached(p, feats, edges)
    return h


def gnn_forward_cached(p: GNNParams, feats: np.ndarray, edges) -> tuple[np.ndarray, dict]:
    """Run the message-passing stack.

    Each layer computes, per directed edge (i, j):
      message  m_ij = MLP_msg([h_i ; h_j])
      gate     a_ij = sigmoid(MLP_att([h_i ; h_j]))
    and updates h_i = MLP_upd([h_i ; sum_j a_ij * m_ij]).
    ``edges`` may be an undirected pair list or a precomputed (src, dst) tuple
    of index arrays.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError("feats must be 2-D (nodes x width)")
    n = feats.shape[0]
    if isinstance(edges, tuple) and len(edges) == 2 and isinstance(edges[0], np.ndarray):
        src, dst = edges
    else:
        src, dst = canonical_directed_edges(edges, n)
    check_finite(feats, "gnn input")

    h = feats
    layer_caches = []
    for layer in p.layers:
        e_in = np.concatenate([h[src], h[dst]], axis=1) if src.size else np.zeros((0, 2 * h.shape[1]))
        m, mc = mlp_forward_cached(layer.msg, e_in)
        z, zc = mlp_forward_cached(layer.att, e_in)
        a = sigmoid(z)
        agg = _scatter_rows(a * m, src, n)
        u_in = np.concatenate([h, agg], axis=1)
        h_new, uc = mlp_forward_cached(layer.upd, u_in)
        layer_caches.append({"h": h, "m": m, "mc": mc, "a": a, "zc": zc, "uc": uc})
        h = h_new
    check_finite(h, "gnn output")
    return h, {"src": src, "dst": dst, "layers": layer_caches, "n": n}


def gnn_backward(p: GNNParams, cache: dict, dh: np.ndarray) -> tuple[np.ndarray, GNNParams]:
    src, dst, n = cache["src"], cache["dst"], cache["n"]
    width = p.width
    grads = []
    g = np.asarray(dh, dtype=np.float64)
    for layer, lc in zip(reversed(p.layers), reversed(cache["layers"])):
        du_in, upd_g = mlp_backward(layer.upd, lc["uc"], g)
        dh_prev = du_in[:, :width].copy()
        dagg = du_in[:, width:]
        dam = dagg[src] if src.size else np.zeros((0, width))
        dm = dam * lc["a"]
        dz = dam * lc["m"] * lc["a"] * (1.0 - lc["a"])
        de_msg, msg_g = mlp_backward(layer.msg, lc["mc"], dm)
        de_att, att_g = mlp_backward(layer.att, lc["zc"], dz)
        de = de_msg + de_att
        if src.size:
            dh_prev += _scatter_rows(de[:, :width], src, n)
            dh_prev += _scatter_rows(de[:, width:], dst, n)
        grads.append(GNNLayerParams(msg=msg_g, att=att_g, upd=upd_g))
        g = dh_prev
    return g, GNNParams(list(reversed(grads)))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = dataclasses.field(default_factory=dict)
    v: dict = dataclasses.field(default_factory=dict)


def adam_init(params, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, arr in named_arrays(params):
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(state: AdamState, params, grads):
    """One Adam update, applied in place to the parameter arrays."""
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    pairs = list(named_arrays(params))
    gpairs = dict(named_arrays(grads))
    if set(gpairs) != {name for name, _ in pairs}:
        raise ValueError("gradient tree does not mirror the parameter tree")
    for name, arr in pairs:
        g = gpairs[name]
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        arr -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_arrays(path, named: dict[str, np.ndarray]) -> None:
    """Write named float arrays to an .npz archive (exact round trip)."""
    np.savez(path, **named)


def load_arrays(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k].copy() for k in data.files}
