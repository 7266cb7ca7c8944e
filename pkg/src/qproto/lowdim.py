"""Low-dimensional probe tasks: classification and one/two-variable
regression through a two-qubit circuit head, plus export of the feature-space
maps and prequantum scatter data used to diagnose the circuit bypass problem.

The circuit head is evaluated by a vectorized two-qubit statevector kernel
(exact, batched over samples); its conventions are pinned against the circuit
IR oracle in the tests. Head parameter and input gradients use the exact
expectation shift rule f'(a) = [f(a + pi/2) - f(a - pi/2)] / 2, valid because
all generators square to the identity.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn as qnn
from .circuits import LOWDIM_OMEGA_COUNT, zz_phases

TASKS = ("classify", "regress1", "regress2")
TARGET_SCALE = 0.5  # keeps regression targets inside the [-1, 1] readout range
_ZZ_FIXED = zz_phases(math.pi / 2)


class LowDimError(ValueError):
    """Raised for bad task names or malformed configs."""


def make_lowdim_dataset(kind, size, seed):
    """Uniform inputs on [-1, 1]^2 with the task's target rule applied.

    classify: +1 when the first component is larger, else -1.
    regress1: 0.5 * (x0 - x1).
    regress2: (0.5 * (x0 - x1), 0.5 * (x0 + x1)).
    Targets always come back as (size, n_heads).
    """
    if kind not in TASKS:
        raise LowDimError(f"unknown task {kind!r}, expected one of {TASKS}")
    if size < 1:
        raise LowDimError(f"size must be >= 1, got {size}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(size, 2))
    if kind == "classify":
        y = np.where(x[:, 0] > x[:, 1], 1.0, -1.0)[:, None]
    elif kind == "regress1":
        y = (TARGET_SCALE * (x[:, 0] - x[:, 1]))[:, None]
    else:
        y = np.stack(
            [TARGET_SCALE * (x[:, 0] - x[:, 1]), TARGET_SCALE * (x[:, 0] + x[:, 1])], axis=1
        )
    return x, y


# ---------------------------------------------------------------------------
# Batched two-qubit head
# ---------------------------------------------------------------------------

def _rot_blocks(angles, pauli):
    half = np.asarray(angles, dtype=np.float64) / 2
    c, s = np.cos(half), np.sin(half)
    m = np.empty(half.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = c
    m[..., 1, 1] = c
    if pauli == "x":
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
    else:
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
    return m


def _apply(psi, mats, qubit):
    if qubit == 0:
        return np.einsum("bij,bjk->bik", mats, psi)
    return np.einsum("bij,bkj->bki", mats, psi)


def head_expectation(x, omega):
    """<Z> on qubit 0 after the two-qubit circuit: Rx encoding of the two
    inputs, then three Ry layers with a fixed ZZ(pi/2) entangler after the
    encoding and after every layer. Vectorized over the batch."""
    x = np.asarray(x, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise LowDimError(f"inputs must be (batch, 2), got {x.shape}")
    if omega.shape != (LOWDIM_OMEGA_COUNT,):
        raise LowDimError(f"omega must have shape ({LOWDIM_OMEGA_COUNT},), got {omega.shape}")
    batch = x.shape[0]
    psi = np.zeros((batch, 2, 2), dtype=np.complex128)
    psi[:, 0, 0] = 1.0
    psi = _apply(psi, _rot_blocks(x[:, 0], "x"), 0)
    psi = _apply(psi, _rot_blocks(x[:, 1], "x"), 1)
    psi = psi * _ZZ_FIXED[None, :, :]
    ones = np.ones(batch)
    for layer in range(3):
        psi = _apply(psi, _rot_blocks(omega[2 * layer] * ones, "y"), 0)
        psi = _apply(psi, _rot_blocks(omega[2 * layer + 1] * ones, "y"), 1)
        psi = psi * _ZZ_FIXED[None, :, :]
    probs = np.abs(psi) ** 2
    return probs[:, 0, :].sum(axis=1) - probs[:, 1, :].sum(axis=1)


def head_gradients(x, omega, upstream):
    """Shift-rule gradients of sum_b upstream[b] * <Z>_b.

    Returns (d_inputs (batch, 2), d_omega (6,)). Every angle appears once in
    the circuit, so a single +-pi/2 pair per parameter is exact.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    shift = math.pi / 2
    d_x = np.empty_like(x)
    for col in range(2):
        plus, minus = x.copy(), x.copy()
        plus[:, col] += shift
        minus[:, col] -= shift
        d = (head_expectation(plus, omega) - head_expectation(minus, omega)) / 2
        d_x[:, col] = upstream * d
    d_omega = np.empty(LOWDIM_OMEGA_COUNT)
    for j in range(LOWDIM_OMEGA_COUNT):
        plus, minus = omega.copy(), omega.copy()
        plus[j] += shift
        minus[j] -= shift
        d = (head_expectation(x, plus) - head_expectation(x, minus)) / 2
        d_omega[j] = float(upstream @ d)
    return d_x, d_omega


# ---------------------------------------------------------------------------
# Model and training
# ---------------------------------------------------------------------------

@dataclass
class LowDimModel:
    task: str
    encoder: qnn.Mlp
    omegas: list  # one (6,) parameter vector per head

    @property
    def n_heads(self):
        return len(self.omegas)

    def forward(self, x):
        emb, cache = self.encoder.forward(x)
        outs = np.stack([head_expectation(emb, w) for w in self.omegas], axis=1)
        return outs, (emb, cache)


_LOWDIM_DEFAULTS = {
    "n_samples": 2000,
    "epochs": 40,
    "batch_size": 128,
    "lr": 1e-3,
    "hidden_width": 32,
}
_LOWDIM_REQUIRED = ("task", "seed")


def validate_lowdim_config(blob):
    errors = []
    known = set(_LOWDIM_DEFAULTS) | set(_LOWDIM_REQUIRED)
    unknown = set(blob) - known
    if unknown:
        errors.append(f"unknown config keys: {sorted(unknown)}")
    merged = dict(_LOWDIM_DEFAULTS)
    merged.update({k: v for k, v in blob.items() if k in known})
    for key in _LOWDIM_REQUIRED:
        if key not in blob:
            errors.append(f"missing required key: {key}")
    if "task" in merged and merged["task"] not in TASKS:
        errors.append(f"bad task {merged.get('task')!r}, expected one of {TASKS}")
    for key in ("n_samples", "epochs", "batch_size", "hidden_width"):
        v = merged.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            errors.append(f"bad value for {key!r}: {v!r} (positive integer)")
    seed = merged.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        errors.append(f"bad value for 'seed': {seed!r} (non-negative integer)")
    lr = merged.get("lr")
    if lr is not None and (not isinstance(lr, (int, float)) or lr <= 0):
        errors.append(f"bad value for 'lr': {lr!r} (positive)")
    if errors:
        raise LowDimError("; ".join(errors))
    return merged


def build_lowdim_model(task, hidden_width, seed):
    """Encoder: 8 fully connected layers, ReLU everywhere except the final
    (pre-circuit) layer. regress2 gets two heads with separate circuit
    parameters; the encoder is shared."""
    seeds = np.random.default_rng(seed).integers(2 ** 63, size=2)
    widths = [2] + [hidden_width] * 7 + [2]
    encoder = qnn.Mlp.init_random(widths, int(seeds[0]))
    n_heads = 2 if task == "regress2" else 1
    omega_rng = np.random.default_rng(int(seeds[1]))
    omegas = [omega_rng.uniform(-0.1, 0.1, LOWDIM_OMEGA_COUNT) for _ in range(n_heads)]
    return LowDimModel(task, encoder, omegas)


def train_lowdim(config, dataset=None):
    """Minibatch MSE training for all three tasks; classification trains
    against its +-1 targets with MSE as well and is additionally reported as
    sign accuracy. Returns (model, history).

    `dataset` overrides the generated (inputs, targets) pair, e.g. to probe
    degenerate targets.
    """
    cfg = validate_lowdim_config(config)
    if dataset is not None:
        x, y = np.asarray(dataset[0], dtype=np.float64), np.asarray(dataset[1], dtype=np.float64)
    else:
        x, y = make_lowdim_dataset(cfg["task"], cfg["n_samples"], cfg["seed"])
    model = build_lowdim_model(cfg["task"], cfg["hidden_width"], cfg["seed"] + 1)
    params = model.encoder.parameters() + model.omegas
    opt = qnn.OptimizerState("adam", cfg["lr"])
    batch_rng = np.random.default_rng(cfg["seed"] + 2)
    n = x.shape[0]
    history = []
    for epoch in range(cfg["epochs"]):
        order = batch_rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg["batch_size"]):
            rows = order[lo:lo + cfg["batch_size"]]
            xb, yb = x[rows], y[rows]
            outs, (emb, cache) = model.forward(xb)
            err = outs - yb
            losses.append(float((err ** 2).mean()))
            upstream_out = 2.0 * err / err.size
            d_emb = np.zeros_like(emb)
            omega_grads = []
            for h, w in enumerate(model.omegas):
                dx_h, dw_h = head_gradients(emb, w, upstream_out[:, h])
                d_emb += dx_h
                omega_grads.append(dw_h)
            enc_grads, _ = model.encoder.backward(cache, d_emb)
            qnn.optimizer_step(params, enc_grads + omega_grads, opt)
            model.encoder.mark_updated()
        row = {"epoch": epoch, "mse": float(np.mean(losses))}
        if cfg["task"] == "classify":
            outs, _ = model.forward(x)
            row["accuracy"] = float(np.mean(np.sign(outs[:, 0]) == y[:, 0]))
        history.append(row)
    return model, history


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def export_feature_map(model, grid_resolution, out_dir, sample_size=2000, seed=0):
    """Write the quantum feature-space map(s) and the prequantum scatter.

    map CSV: phi0,phi1,expectation over a [-pi, pi]^2 grid (embeddings enter
    as rotation angles, so one 2*pi period covers the feature space);
    scatter CSV: phi0,phi1 encoder outputs for a fresh uniform input sample.
    Heads get suffixed map files when there are several.
    """
    os.makedirs(out_dir, exist_ok=True)
    axis = np.linspace(-math.pi, math.pi, grid_resolution)
    g0, g1 = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([g0.ravel(), g1.ravel()], axis=1)
    paths = {}
    for h, w in enumerate(model.omegas):
        values = head_expectation(grid, w)
        name = "map.csv" if model.n_heads == 1 else f"map_head{h}.csv"
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write("phi0,phi1,expectation\n")
            for (a, b), v in zip(grid, values):
                fh.write(f"{a!r},{b!r},{v!r}\n")
        paths[name] = path

    rng = np.random.default_rng(seed)
    fresh = rng.uniform(-1.0, 1.0, size=(sample_size, 2))
    emb, _ = model.encoder.forward(fresh)
    scatter_path = os.path.join(out_dir, "scatter.csv")
    with open(scatter_path, "w") as fh:
        fh.write("phi0,phi1\n")
        for a, b in emb:
            fh.write(f"{a!r},{b!r}\n")
    paths["scatter.csv"] = scatter_path
    return paths


def save_lowdim_model(out_dir, model):
    os.makedirs(out_dir, exist_ok=True)
    qnn.save_checkpoint(os.path.join(out_dir, "encoder.qpnn"), model.encoder)
    with open(os.path.join(out_dir, "heads.json"), "w") as fh:
        json.dump({"task": model.task, "omegas": [w.tolist() for w in model.omegas]}, fh)
