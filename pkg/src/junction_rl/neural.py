"""Fixed-topology dense Q-network: forward, backward, TD loss and Adam.

Weights are stored as ``(out, in)`` matrices so a layer computes
``W @ x + b``. Inputs may be a single vector or a ``(batch, in)`` matrix.
Hidden layers use ReLU (subgradient 0 at 0); the output layer is linear.
Everything runs in float64.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "JRLNET"
FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class CacheError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    generation: int = 0

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            out += [(f"W{i}", w), (f"b{i}", b)]
        return out

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.generation)

    def assign(self, other: MlpParams) -> None:
        """Overwrite values in place with those of ``other``."""
        for dst, src in zip(self.weights + self.biases, other.weights + other.biases):
            dst[...] = src
        self.generation += 1


def init_params(sizes, rng: np.random.Generator) -> MlpParams:
    """He-uniform hidden layers, Glorot-uniform output layer, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if i < n_layers - 1:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def zeros_like_params(sizes) -> MlpParams:
    sizes = tuple(sizes)
    return MlpParams(
        [np.zeros((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)],
        [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)],
    )


@dataclass
class ForwardCache:
    params: MlpParams
    generation: int
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    batched: bool


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            out += [(f"W{i}", w), (f"b{i}", b)]
        return out


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != params.weights[0].shape[1]:
        raise ShapeError(f"input shape {x.shape} does not match input_dim {params.weights[0].shape[1]}")
    h = x if batched else x[None, :]
    inputs, pre = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    q = h if batched else h[0]
    return q, ForwardCache(params, params.generation, inputs, pre, batched)


def q_values(params: MlpParams, x) -> np.ndarray:
    """Forward pass without keeping a cache."""
    h = np.asarray(x, dtype=np.float64)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def float32_layers(params: MlpParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Single-precision copies of the weights for :func:`greedy_action`."""
    return [(w.astype(np.float32), b.astype(np.float32)) for w, b in zip(params.weights, params.biases)]


def greedy_action(params: MlpParams, x, layers32=None, margin: float = 1e-3) -> int:
    """``argmax`` of :func:`q_values` for a single state.

    With ``layers32`` the pass runs in single precision first (the large
    hidden layer then fits in cache); only when the two best values are
    within ``margin`` (relative) is the double-precision pass repeated, so
    the chosen action is the same as the double-precision argmax.
    """
    if layers32 is not None:
        h = np.asarray(x, dtype=np.float32)
        last = len(layers32) - 1
        for i, (w, b) in enumerate(layers32):
            h = w @ h + b
            if i < last:
                h = np.maximum(h, 0.0)
        top = np.partition(h, -2)[-2:] if h.size > 1 else h
        if h.size == 1 or float(top[1] - top[0]) > margin * (1.0 + float(np.abs(h).max())):
            return int(np.argmax(h))
    return int(np.argmax(q_values(params, x)))


def backward(cache: ForwardCache, dq) -> GradientSet:
    """Gradients of the loss w.r.t. every parameter given ``dL/dq``."""
    params = cache.params
    if cache.generation != params.generation:
        raise CacheError("parameters changed since the forward pass")
    dq = np.asarray(dq, dtype=np.float64)
    g = dq if cache.batched else dq[None, :]
    if g.shape != cache.pre[-1].shape:
        raise CacheError(f"dL/dq shape {dq.shape} does not match cached output {cache.pre[-1].shape}")
    n = len(params.weights)
    dws: list[np.ndarray] = [None] * n
    dbs: list[np.ndarray] = [None] * n
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * (cache.pre[i] > 0.0)
        dws[i] = g.T @ cache.inputs[i]
        dbs[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i]
    return GradientSet(dws, dbs)


def td_loss(q, action, y) -> tuple[float, np.ndarray]:
    """Squared TD error on the chosen action; batch inputs give the mean."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 1:
        a = int(action)
        if a not in range(q.shape[0]):
            raise ValueError(f"action {action} out of range")
        err = q[a] - float(y)
        grad = np.zeros_like(q)
        grad[a] = 2.0 * err
        return float(err * err), grad
    actions = np.asarray(action, dtype=np.intp)
    y = np.asarray(y, dtype=np.float64)
    rows = np.arange(q.shape[0])
    err = q[rows, actions] - y
    grad = np.zeros_like(q)
    grad[rows, actions] = 2.0 * err / q.shape[0]
    return float(np.mean(err * err)), grad


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    flat = params.weights + params.biases
    return AdamState([np.zeros_like(p) for p in flat], [np.zeros_like(p) for p in flat], 0, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: GradientSet, state: AdamState, lr: float) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    flat_p = params.weights + params.biases
    flat_g = grads.weights + grads.biases
    names = [f"W{i}" for i in range(1, len(params.weights) + 1)] + [
        f"b{i}" for i in range(1, len(params.biases) + 1)
    ]
    for name, p, g in zip(names, flat_p, flat_g):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.generation += 1
    return params, state


# -- checkpoints -----------------------------------------------------------

def _header(params: MlpParams, adam: AdamState | None) -> str:
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        "layers " + " ".join(str(s) for s in params.sizes),
        f"adam_step {adam.t if adam else 0}",
        f"adam_moments {1 if adam else 0}",
    ]
    if adam:
        lines.append(f"adam_constants {adam.beta1!r} {adam.beta2!r} {adam.eps!r}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def dumps_checkpoint(params: MlpParams, adam: AdamState | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(_header(params, adam).encode("ascii"))
    blocks = params.weights + params.biases
    if adam:
        blocks = blocks + adam.m + adam.v
    for arr in blocks:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_checkpoint(blob: bytes) -> tuple[MlpParams, AdamState | None]:
    end = blob.find(b"\nend\n")
    if end < 0:
        raise CheckpointError("missing header terminator")
    header = blob[: end + 1].decode("ascii").splitlines()
    payload = blob[end + 5 :]
    magic = header[0].split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise CheckpointError("not a network checkpoint")
    if int(magic[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {magic[1]}")
    fields = {line.split()[0]: line.split()[1:] for line in header[1:]}
    sizes = tuple(int(s) for s in fields["layers"])
    step = int(fields["adam_step"][0])
    has_moments = fields["adam_moments"][0] == "1"
    shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
    shapes += [(sizes[i + 1],) for i in range(len(sizes) - 1)]
    if has_moments:
        shapes = shapes + shapes + shapes
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != expected:
        raise CheckpointError(f"payload has {len(payload)} bytes, expected {expected}")
    arrays, off = [], 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(s))
        off += n * 8
    k = len(sizes) - 1
    params = MlpParams(arrays[:k], arrays[k : 2 * k])
    adam = None
    if has_moments:
        b1, b2, eps = (float(x) for x in fields["adam_constants"])
        adam = AdamState(arrays[2 * k : 4 * k], arrays[4 * k : 6 * k], step, b1, b2, eps)
    return params, adam


def save_checkpoint(path: str | Path, params: MlpParams, adam: AdamState | None = None) -> None:
    Path(path).write_bytes(dumps_checkpoint(params, adam))


def load_checkpoint(path: str | Path) -> tuple[MlpParams, AdamState | None]:
    return loads_checkpoint(Path(path).read_bytes())
