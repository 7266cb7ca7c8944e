"""Episode losses (classical and quantum), the hybrid training loop, and
episode-averaged evaluation with confidence intervals.

The classical path is a standard prototypical network: class prototypes are
embedding means and the query is classified by softmax over negated
distances. The quantum path replaces the distance with state fidelity; class
scores average complex pair amplitudes and the default loss is the negative
normalized probability (the softmax/log variant is kept behind a config
switch).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as qd
from . import nn as qnn
from .kernel import DegenerateEpisodeError, QuantumHead

logger = logging.getLogger(__name__)

HEADS = ("classical_euclidean", "classical_cosine", "quantum")
LOSS_MODES = ("negative_probability", "softmax_log")


class ConfigError(ValueError):
    """Raised with the full list of configuration problems, not just the first."""


@dataclass
class FewShotModel:
    encoder: qnn.Mlp
    head: str  # one of HEADS
    quantum: QuantumHead | None = None
    loss_mode: str = "negative_probability"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == "quantum":
            if self.quantum is None:
                raise ConfigError("quantum head requires a QuantumHead")
            if self.encoder.widths[-1] != self.quantum.n:
                raise ConfigError(
                    f"encoder output {self.encoder.widths[-1]} != qubit count {self.quantum.n}"
                )


# ---------------------------------------------------------------------------
# Episode scoring
# ---------------------------------------------------------------------------

def _log_softmax(logits):
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def _classical_distances(protos, queries, metric):
    """(n_way, Q) distance matrix plus what backward needs."""
    if metric == "euclidean":
        diff = protos[:, None, :] - queries[None, :, :]
        return (diff ** 2).sum(axis=2), diff
    # cosine
    p_norm = np.linalg.norm(protos, axis=1)
    q_norm = np.linalg.norm(queries, axis=1)
    if np.any(p_norm == 0.0) or np.any(q_norm == 0.0):
        raise qnn.NnError("cosine distance undefined for a zero embedding")
    cos = (protos @ queries.T) / np.outer(p_norm, q_norm)
    return 1.0 - cos, (cos, p_norm, q_norm)


def classical_episode_loss(model, episode):
    """Mean negative log-probability of the true class over the episode's
    queries, with exact gradients for every encoder parameter."""
    metric = "euclidean" if model.head == "classical_euclidean" else "cosine"
    n_way, k = episode.n_way, episode.k_shot
    sup_flat = episode.support_x.reshape(n_way * k, -1)
    x = np.concatenate([sup_flat, episode.query_x], axis=0)
    emb, cache = model.encoder.forward(x)
    sup = emb[: n_way * k].reshape(n_way, k, -1)
    qry = emb[n_way * k:]
    protos = sup.mean(axis=1)

    dists, aux = _classical_distances(protos, qry, metric)
    logp = _log_softmax(-dists)
    n_q = qry.shape[0]
    slots = episode.query_slot
    loss = -logp[slots, np.arange(n_q)].mean()

    p = np.exp(logp)
    d_dist = -p / n_q
    d_dist[slots, np.arange(n_q)] += 1.0 / n_q

    if metric == "euclidean":
        diff = aux
        d_protos = (d_dist[:, :, None] * 2.0 * diff).sum(axis=1)
        d_qry = (d_dist[:, :, None] * -2.0 * diff).sum(axis=0)
    else:
        cos, p_norm, q_norm = aux
        # d(1 - cos)/da = -(b/(|a||b|) - cos * a/|a|^2), same shape games for b
        inv = 1.0 / np.outer(p_norm, q_norm)
        d_cos = -d_dist
        d_protos = (d_cos * inv) @ qry - (
            ((d_cos * cos).sum(axis=1) / p_norm ** 2)[:, None] * protos
        )
        d_qry = (d_cos * inv).T @ protos - (
            ((d_cos * cos).sum(axis=0) / q_norm ** 2)[:, None] * qry
        )

    d_sup = np.repeat(d_protos / k, k, axis=0)
    upstream = np.concatenate([d_sup, d_qry], axis=0)
    grads, _ = model.encoder.backward(cache, upstream)
    return loss, grads


def quantum_episode_loss(model, episode):
    """Default loss: mean over queries of -p_quantum(true class), where class
    scores average the complex pair amplitudes of the k supports.

    Returns (loss, encoder grads, theta grad). Raises DegenerateEpisodeError
    when some query's scores are all exactly zero.
    """
    head = model.quantum
    n_way, k = episode.n_way, episode.k_shot
    s_count = n_way * k
    sup_flat = episode.support_x.reshape(s_count, -1)
    x = np.concatenate([sup_flat, episode.query_x], axis=0)
    emb, cache = model.encoder.forward(x)
    sup = emb[:s_count]
    qry = emb[s_count:]
    n_q = qry.shape[0]

    left = np.tile(sup, (n_q, 1))
    right = np.repeat(qry, s_count, axis=0)
    amps = head.amplitudes(left, right)
    scores = amps.reshape(n_q, n_way, k).mean(axis=2)
    fid = np.abs(scores) ** 2
    totals = fid.sum(axis=1)
    if np.any(totals == 0.0):
        raise DegenerateEpisodeError("a query scored zero against every class")
    probs = fid / totals[:, None]

    slots = episode.query_slot
    rows = np.arange(n_q)
    if model.loss_mode == "negative_probability":
        loss = -probs[rows, slots].mean()
        d_fid = np.broadcast_to(
            (fid[rows, slots] / totals ** 2)[:, None], fid.shape
        ).copy()
        d_fid[rows, slots] -= 1.0 / totals
        d_fid /= n_q
    else:  # softmax over fidelities, negative log-probability
        logp = _log_softmax(fid.T).T
        loss = -logp[rows, slots].mean()
        d_fid = np.exp(logp) / n_q
        d_fid[rows, slots] -= 1.0 / n_q

    adj_scores = d_fid * 2.0 * scores  # pair-form gradient of |s|^2 is 2s
    adj_amps = np.repeat(adj_scores.reshape(n_q, n_way), k, axis=1).reshape(-1) / k

    d_left, d_right, d_theta = head.grad(left, right, adj_amps)
    d_sup = d_left.reshape(n_q, s_count, -1).sum(axis=0)
    d_qry = d_right.reshape(n_q, s_count, -1).sum(axis=1)
    upstream = np.concatenate([d_sup, d_qry], axis=0)
    grads, _ = model.encoder.backward(cache, upstream)
    return loss, grads, d_theta


def episode_probabilities(model, episode):
    """(Q, n_way) class probabilities for every query; forward only."""
    n_way, k = episode.n_way, episode.k_shot
    s_count = n_way * k
    sup_flat = episode.support_x.reshape(s_count, -1)
    x = np.concatenate([sup_flat, episode.query_x], axis=0)
    emb, _ = model.encoder.forward(x)
    sup = emb[:s_count]
    qry = emb[s_count:]
    if model.head == "quantum":
        n_q = qry.shape[0]
        left = np.tile(sup, (n_q, 1))
        right = np.repeat(qry, s_count, axis=0)
        amps = model.quantum.amplitudes(left, right)
        scores = amps.reshape(n_q, n_way, k).mean(axis=2)
        fid = np.abs(scores) ** 2
        totals = fid.sum(axis=1)
        if np.any(totals == 0.0):
            raise DegenerateEpisodeError("a query scored zero against every class")
        return fid / totals[:, None]
    metric = "euclidean" if model.head == "classical_euclidean" else "cosine"
    protos = sup.reshape(n_way, k, -1).mean(axis=1)
    dists, _ = _classical_distances(protos, qry, metric)
    return np.exp(_log_softmax(-dists)).T


def evaluate(model, dataset, n_episodes, n_way, k_shot, q_query, seed):
    """Mean query accuracy over freshly sampled test-split episodes, with a
    95% CI (1.96 * standard error across episodes). Argmax ties break toward
    the lowest class slot."""
    rng = np.random.default_rng(seed)
    accs = []
    for _ in range(n_episodes):
        episode = qd.sample_episode(dataset, qd.TEST, n_way, k_shot, q_query, rng)
        probs = episode_probabilities(model, episode)
        pred = np.argmax(probs, axis=1)
        accs.append(float(np.mean(pred == episode.query_slot)))
    acc = float(np.mean(accs)) if accs else float("nan")
    ci = 1.96 * float(np.std(accs, ddof=1)) / np.sqrt(len(accs)) if len(accs) > 1 else 0.0
    return acc, ci


# ---------------------------------------------------------------------------
# Config and training loop
# ---------------------------------------------------------------------------

_CONFIG_DEFAULTS = {
    "layers": 1,
    "theta_range": 0.0,
    "loss_mode": "negative_probability",
    "q_query": 5,
    "episodes_per_epoch": 100,
    "encoder_hidden": [64],
    "optimizer": "adam",
    "eval_n_way": None,  # defaults to n_way
    "eval_k_shot": None,
    "eval_q_query": None,
    "eval_episodes": 40,
    "dump_embeddings": False,
    "embed_dump_limit": 512,
}
_CONFIG_REQUIRED = ("dataset", "head", "n_qubits", "n_way", "k_shot", "epochs", "lr", "seed")

_DATASET_KEYS = {
    "synth": {"type", "n_classes", "per_class", "dim", "spread", "seed", "test_classes", "split_seed"},
    "manifest": {"type", "path", "test_classes", "split_seed"},
}


@dataclass
class TrainConfig:
    raw: dict

    def __getattr__(self, key):
        try:
            return self.raw[key]
        except KeyError:
            raise AttributeError(key)


def validate_config(blob):
    """Check a raw config dict exhaustively; returns TrainConfig or raises
    ConfigError listing every problem at once."""
    errors = []
    known = set(_CONFIG_DEFAULTS) | set(_CONFIG_REQUIRED)
    unknown = set(blob) - known
    if unknown:
        errors.append(f"unknown config keys: {sorted(unknown)}")
    merged = dict(_CONFIG_DEFAULTS)
    merged.update({k: v for k, v in blob.items() if k in known})
    for key in _CONFIG_REQUIRED:
        if key not in blob:
            errors.append(f"missing required key: {key}")

    def need(key, kind, cond=lambda v: True, what=""):
        v = merged.get(key)
        if v is None:
            return
        type_ok = isinstance(v, kind) and not (isinstance(v, bool) and kind is not bool)
        if not type_ok or not cond(v):
            errors.append(f"bad value for {key!r}: {v!r} {what}".rstrip())

    need("head", str, lambda v: v in HEADS, f"(expected one of {HEADS})")
    need("loss_mode", str, lambda v: v in LOSS_MODES, f"(expected one of {LOSS_MODES})")
    need("optimizer", str, lambda v: v in ("sgd", "adam"))
    for key in ("n_qubits", "n_way", "k_shot", "q_query", "layers"):
        need(key, int, lambda v: v >= 1, "(positive integer)")
    for key in ("episodes_per_epoch", "epochs", "eval_episodes", "embed_dump_limit"):
        need(key, int, lambda v: v >= 0, "(non-negative integer)")
    need("lr", (int, float), lambda v: v > 0, "(positive)")
    need("seed", int)
    need("theta_range", (int, float), lambda v: 0 <= v <= 2 * np.pi, "(within [0, 2pi])")
    need("encoder_hidden", list, lambda v: all(isinstance(w, int) and w >= 1 for w in v))
    for key in ("eval_n_way", "eval_k_shot", "eval_q_query"):
        need(key, int, lambda v: v >= 1, "(positive integer)")

    ds = merged.get("dataset")
    if not isinstance(ds, dict) or ds.get("type") not in _DATASET_KEYS:
        errors.append(f"dataset must be a dict with type in {sorted(_DATASET_KEYS)}")
    else:
        allowed = _DATASET_KEYS[ds["type"]]
        extra = set(ds) - allowed
        if extra:
            errors.append(f"unknown dataset keys: {sorted(extra)}")
        missing = allowed - set(ds)
        if missing:
            errors.append(f"missing dataset keys: {sorted(missing)}")

    if errors:
        raise ConfigError("; ".join(errors))
    for key in ("eval_n_way", "eval_k_shot", "eval_q_query"):
        if merged[key] is None:
            merged[key] = merged[key.removeprefix("eval_")]
    return TrainConfig(merged)


def build_dataset(spec):
    if spec["type"] == "synth":
        ds = qd.synth_classes(
            spec["n_classes"], spec["per_class"], spec["dim"], spec["spread"], spec["seed"]
        )
    else:
        ds = qd.load_manifest(spec["path"])
    return qd.split_classes(ds, spec["test_classes"], spec["split_seed"])


def build_model(cfg, dataset):
    seeds = np.random.default_rng(cfg.seed).integers(2 ** 63, size=4)
    widths = [dataset.dim] + list(cfg.encoder_hidden) + [cfg.n_qubits]
    encoder = qnn.Mlp.init_random(widths, int(seeds[0]))
    quantum = None
    if cfg.head == "quantum":
        from .circuits import ThetaInit, metric_theta_count

        theta = ThetaInit(float(cfg.theta_range), int(seeds[1])).sample(
            metric_theta_count(cfg.n_qubits, cfg.layers)
        )
        quantum = QuantumHead(cfg.n_qubits, cfg.layers, theta)
    model = FewShotModel(encoder, cfg.head, quantum, cfg.loss_mode)
    return model, int(seeds[2]), int(seeds[3])


@dataclass
class TrainReport:
    config: dict
    episode_losses: list = field(default_factory=list)
    epoch_rows: list = field(default_factory=list)  # {epoch, train_loss, test_acc, ci}
    best_acc: float | None = None
    best_epoch: int | None = None
    skipped_episodes: int = 0

    def metrics_csv_text(self):
        lines = ["epoch,train_loss,test_acc,ci"]
        for row in self.epoch_rows:
            lines.append(
                f"{row['epoch']},{row['train_loss']!r},{row['test_acc']!r},{row['ci']!r}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps(
            {
                "config": self.config,
                "episode_losses": self.episode_losses,
                "epochs": self.epoch_rows,
                "best_acc": self.best_acc,
                "best_epoch": self.best_epoch,
                "skipped_episodes": self.skipped_episodes,
            },
            indent=2,
        )


def _probe_rows(dataset, limit):
    rows = []
    for cid in dataset.classes_in_split(qd.TEST):
        rows.extend(dataset.class_rows[cid])
    return rows[:limit]


def _dump_embeddings(path, encoder, dataset, rows):
    from .diagnostics import write_embeddings_csv

    emb, _ = encoder.forward(dataset.samples[rows])
    write_embeddings_csv(path, emb, dataset.labels[rows])


def save_model(out_dir, model):
    os.makedirs(out_dir, exist_ok=True)
    qnn.save_checkpoint(os.path.join(out_dir, "encoder.qpnn"), model.encoder)
    head = {"head": model.head, "loss_mode": model.loss_mode}
    if model.quantum is not None:
        head.update(
            n_qubits=model.quantum.n,
            layers=model.quantum.l,
            theta=model.quantum.theta.tolist(),
        )
    with open(os.path.join(out_dir, "head.json"), "w") as fh:
        json.dump(head, fh)


def load_model(out_dir):
    encoder = qnn.load_checkpoint(os.path.join(out_dir, "encoder.qpnn"))
    with open(os.path.join(out_dir, "head.json")) as fh:
        head = json.load(fh)
    quantum = None
    if head["head"] == "quantum":
        quantum = QuantumHead(head["n_qubits"], head["layers"], np.asarray(head["theta"]))
    return FewShotModel(encoder, head["head"], quantum, head.get("loss_mode", "negative_probability"))


def train(config, out_dir=None):
    """Run the training loop described by `config` (a dict or TrainConfig).

    Deterministic for a fixed config: the master seed spawns separate streams
    for encoder init, theta init, episode sampling, and evaluation; the same
    evaluation episodes are replayed at every epoch end. The best model by
    test accuracy is checkpointed when out_dir is given.
    """
    cfg = config if isinstance(config, TrainConfig) else validate_config(config)
    dataset = build_dataset(cfg.dataset)
    model, episode_seed, eval_seed = build_model(cfg, dataset)
    report = TrainReport(config=dict(cfg.raw))

    params = model.encoder.parameters()
    if model.quantum is not None:
        params = params + [model.quantum.theta]
    opt = qnn.OptimizerState(cfg.optimizer, cfg.lr)

    probe = _probe_rows(dataset, cfg.embed_dump_limit) if cfg.dump_embeddings else None
    episode_rng = np.random.default_rng(episode_seed)
    for epoch in range(cfg.epochs):
        epoch_losses = []
        skipped = 0
        for _ in range(cfg.episodes_per_epoch):
            episode = qd.sample_episode(
                dataset, qd.TRAIN, cfg.n_way, cfg.k_shot, cfg.q_query, episode_rng
            )
            try:
                if model.head == "quantum":
                    loss, grads, d_theta = quantum_episode_loss(model, episode)
                    grads = grads + [d_theta]
                else:
                    loss, grads = classical_episode_loss(model, episode)
            except DegenerateEpisodeError as exc:
                skipped += 1
                report.skipped_episodes += 1
                logger.warning("skipping degenerate episode: %s", exc)
                if skipped > 0.01 * cfg.episodes_per_epoch:
                    raise RuntimeError(
                        f"epoch {epoch}: {skipped} degenerate episodes exceed 1% "
                        f"of {cfg.episodes_per_epoch}; configuration looks broken"
                    ) from exc
                continue
            qnn.optimizer_step(params, grads, opt)
            model.encoder.mark_updated()
            epoch_losses.append(loss)
            report.episode_losses.append(float(loss))

        acc, ci = evaluate(
            model, dataset, cfg.eval_episodes, cfg.eval_n_way, cfg.eval_k_shot,
            cfg.eval_q_query, eval_seed,
        )
        report.epoch_rows.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                "test_acc": acc,
                "ci": ci,
            }
        )
        if out_dir and cfg.dump_embeddings:
            _dump_embeddings(
                os.path.join(out_dir, f"embeddings_epoch{epoch}.csv"),
                model.encoder, dataset, probe,
            )
        if report.best_acc is None or acc > report.best_acc:
            report.best_acc = acc
            report.best_epoch = epoch
            if out_dir:
                save_model(os.path.join(out_dir, "checkpoint"), model)
                if cfg.dump_embeddings:
                    _dump_embeddings(
                        os.path.join(out_dir, "embeddings_best.csv"),
                        model.encoder, dataset, probe,
                    )

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write(report.metrics_csv_text())
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(report.to_json())
    return report, model
