"""Classical encoder: plain-numpy MLP with exact reverse-mode gradients,
SGD/Adam optimizers, baseline distance metrics, and a flat binary checkpoint
format. ReLU on every layer except the last, which stays linear so its
outputs can serve as rotation angles.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"QPNN"
CHECKPOINT_VERSION = 1


class NnError(ValueError):
    """Raised for shape mismatches, stale caches, or bad checkpoints."""


class Mlp:
    """Fully connected net; widths[0] inputs -> widths[-1] outputs."""

    def __init__(self, widths, weights=None, biases=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise NnError(f"widths must list >= 2 positive sizes, got {widths}")
        self.widths = widths
        if weights is None:
            weights = [np.zeros((o, i)) for i, o in zip(widths[:-1], widths[1:])]
            biases = [np.zeros(o) for o in widths[1:]]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[k + 1], widths[k]) or b.shape != (widths[k + 1],):
                raise NnError(f"layer {k} parameter shapes {w.shape}/{b.shape} do not match widths")
        self._version = 0

    @classmethod
    def init_random(cls, widths, seed):
        """He-style uniform init scaled by fan-in; biases start at zero."""
        rng = np.random.default_rng(seed)
        mlp = cls(widths)
        for k, w in enumerate(mlp.weights):
            limit = np.sqrt(6.0 / widths[k])
            mlp.weights[k] = rng.uniform(-limit, limit, size=w.shape)
        return mlp

    @classmethod
    def identity(cls, dim):
        """Single linear layer acting as the identity; handy as a null encoder."""
        mlp = cls([dim, dim])
        mlp.weights[0] = np.eye(dim)
        return mlp

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def mark_updated(self):
        """Invalidate caches from earlier forwards after in-place updates."""
        self._version += 1

    def forward(self, x):
        """Batch forward pass. Returns (embeddings, cache) where the cache
        feeds backward() and is tied to the current parameter version."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.widths[0]:
            raise NnError(f"input width {x.shape[1]} != {self.widths[0]}")
        inputs = []
        pre = []
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < self.n_layers - 1 else z
        cache = {"inputs": inputs, "pre": pre, "version": self._version, "squeeze": squeeze}
        return (h[0] if squeeze else h), cache

    def backward(self, cache, upstream):
        """Exact reverse-mode gradients.

        upstream: dLoss/d(output), same shape as the forward output.
        Returns (param_grads aligned with parameters(), input_grads).
        ReLU's subgradient at 0 is 0.
        """
        if cache["version"] != self._version:
            raise NnError("stale forward cache: parameters changed since forward()")
        upstream = np.asarray(upstream, dtype=np.float64)
        if cache["squeeze"]:
            upstream = upstream[None, :]
        grads = [None] * (2 * self.n_layers)
        delta = upstream
        for k in range(self.n_layers - 1, -1, -1):
            if k < self.n_layers - 1:
                delta = delta * (cache["pre"][k] > 0.0)
            grads[2 * k] = delta.T @ cache["inputs"][k]
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[k]
        return grads, (delta[0] if cache["squeeze"] else delta)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def distance(a, b, metric):
    """Squared Euclidean (prototypical-network convention) or cosine distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise NnError(f"distance operands differ in shape: {a.shape} vs {b.shape}")
    if metric == "euclidean":
        d = a - b
        return float(d @ d)
    if metric == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise NnError("cosine distance undefined for a zero vector")
        return float(1.0 - (a @ b) / (na * nb))
    raise NnError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str  # 'sgd' | 'adam'
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise NnError(f"unknown optimizer {self.kind!r}")


def optimizer_step(params, grads, state):
    """In-place parameter update. Raises on non-finite gradients, naming the
    offending parameter, rather than corrupting the model."""
    if len(params) != len(grads):
        raise NnError(f"{len(params)} params vs {len(grads)} grads")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NnError(f"non-finite gradient for parameter {i} (shape {np.shape(g)})")
    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= state.lr * g
        return state
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, mlp):
    """Flat binary: QPNN magic, u32 version, u32 layer count, u32 widths,
    then little-endian f64 weight and bias blocks in layer order."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, mlp.n_layers))
        fh.write(struct.pack(f"<{len(mlp.widths)}I", *mlp.widths))
        for w, b in zip(mlp.weights, mlp.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise NnError(f"bad checkpoint magic {blob[:4]!r} in {path}")
    version, n_layers = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise NnError(f"unsupported checkpoint version {version}")
    widths = list(struct.unpack_from(f"<{n_layers + 1}I", blob, 12))
    offset = 12 + 4 * (n_layers + 1)
    weights, biases = [], []
    for k in range(n_layers):
        o, i = widths[k + 1], widths[k]
        w = np.frombuffer(blob, dtype="<f8", count=o * i, offset=offset).reshape(o, i)
        offset += 8 * o * i
        b = np.frombuffer(blob, dtype="<f8", count=o, offset=offset)
        offset += 8 * o
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(blob):
        raise NnError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return Mlp(widths, weights, biases)
