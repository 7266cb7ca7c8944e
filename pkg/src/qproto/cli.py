"""Command-line entry point: train/eval/lowdim/diagnose/bench/verify over
JSON configs, emitting plot-ready CSV/JSON artifacts.

Every run gets its own directory under the output root (QPROTO_OUT or
--out-dir) containing a config snapshot, the seeds, and a content hash of the
inputs, so any artifact can be reproduced from its directory alone. Exit
codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import parallel
from .engine import ConfigError, evaluate, load_model, train, validate_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _load_json(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file does not exist: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _config_hash(blob, referenced_paths=()):
    digest = hashlib.sha256()
    digest.update(json.dumps(blob, sort_keys=True).encode())
    for path in referenced_paths:
        with open(path, "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def _referenced_files(blob):
    paths = []
    ds = blob.get("dataset")
    if isinstance(ds, dict) and ds.get("type") == "manifest" and os.path.exists(ds.get("path", "")):
        manifest = ds["path"]
        paths.append(manifest)
        with open(manifest) as fh:
            meta = json.load(fh)
        base = os.path.dirname(os.path.abspath(manifest))
        for key in ("path_images", "path_labels"):
            if key in meta:
                paths.append(os.path.join(base, meta[key]))
    return paths


def make_run_dir(out_root, blob, tag):
    """timestamp + config-hash run id, collision-checked; writes the config
    snapshot and the content hash of all inputs."""
    content = _config_hash(blob, _referenced_files(blob))
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    base = f"{stamp}-{tag}-{content[:8]}"
    run_dir = os.path.join(out_root, base)
    bump = 1
    while os.path.exists(run_dir):
        bump += 1
        run_dir = os.path.join(out_root, f"{base}-{bump}")
    os.makedirs(run_dir)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
    with open(os.path.join(run_dir, "inputs.sha256"), "w") as fh:
        fh.write(content + "\n")
    return run_dir


def _out_root(args):
    if args.out_dir:
        return args.out_dir
    return os.environ.get("QPROTO_OUT", "runs")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args):
    blob = _load_json(args.config)
    validate_config(blob)
    if args.theta_sweep is not None:
        ranges = [float(r) for r in args.theta_sweep.split(",") if r.strip() != ""]
        bad = [r for r in ranges if not 0 <= r <= 2 * np.pi]
        if bad:
            raise ConfigError(f"theta sweep ranges must lie in [0, 2pi], got {bad}")
        run_dir = make_run_dir(_out_root(args), {**blob, "theta_sweep": ranges}, "sweep")
        rows = []
        for r in ranges:
            sub_blob = dict(blob)
            sub_blob["theta_range"] = r
            sub_dir = os.path.join(run_dir, f"range_{r:g}")
            os.makedirs(sub_dir)
            report, _ = train(sub_blob, out_dir=sub_dir)
            best = report.epoch_rows[report.best_epoch] if report.best_epoch is not None else None
            rows.append((r, report.best_acc, best["ci"] if best else float("nan")))
            print(f"theta range {r:g}: best acc {report.best_acc}")
        with open(os.path.join(run_dir, "sweep_summary.csv"), "w") as fh:
            fh.write("theta_range,best_acc,ci\n")
            for r, acc, ci in rows:
                fh.write(f"{r!r},{acc!r},{ci!r}\n")
        print(f"sweep artifacts in {run_dir}")
        return EXIT_OK
    run_dir = make_run_dir(_out_root(args), blob, "train")
    report, _ = train(blob, out_dir=run_dir)
    print(f"best test accuracy: {report.best_acc} (epoch {report.best_epoch})")
    print(f"artifacts in {run_dir}")
    return EXIT_OK


_EVAL_KEYS = {"checkpoint", "dataset", "n_way", "k_shot", "q_query", "episodes", "seed"}


def cmd_eval(args):
    blob = _load_json(args.config)
    unknown = set(blob) - _EVAL_KEYS
    missing = _EVAL_KEYS - set(blob)
    if unknown or missing:
        problems = []
        if unknown:
            problems.append(f"unknown keys {sorted(unknown)}")
        if missing:
            problems.append(f"missing keys {sorted(missing)}")
        raise ConfigError("eval config: " + "; ".join(problems))
    from .engine import build_dataset

    model = load_model(blob["checkpoint"])
    dataset = build_dataset(blob["dataset"])
    run_dir = make_run_dir(_out_root(args), blob, "eval")
    acc, ci = evaluate(
        model, dataset, blob["episodes"], blob["n_way"], blob["k_shot"],
        blob["q_query"], blob["seed"],
    )
    result = {"accuracy": acc, "ci95": ci, "episodes": blob["episodes"]}
    with open(os.path.join(run_dir, "eval.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    print(f"accuracy {acc:.4f} +- {ci:.4f} over {blob['episodes']} episodes")
    return EXIT_OK


def cmd_lowdim(args):
    from .diagnostics import EmbeddingRecord, components_for_threshold, pca_explained_variance
    from .lowdim import export_feature_map, save_lowdim_model, train_lowdim, validate_lowdim_config

    blob = _load_json(args.config)
    validate_lowdim_config(blob)
    run_dir = make_run_dir(_out_root(args), blob, "lowdim")
    model, history = train_lowdim(blob)
    with open(os.path.join(run_dir, "history.csv"), "w") as fh:
        cols = sorted({k for row in history for k in row})
        fh.write(",".join(cols) + "\n")
        for row in history:
            fh.write(",".join(repr(row.get(c, "")) for c in cols) + "\n")
    save_lowdim_model(os.path.join(run_dir, "model"), model)
    export_feature_map(model, args.grid, run_dir, seed=blob["seed"] + 99)
    scatter = np.loadtxt(os.path.join(run_dir, "scatter.csv"), delimiter=",", skiprows=1)
    ratios = pca_explained_variance(EmbeddingRecord(scatter, np.zeros(len(scatter))))
    k90 = components_for_threshold(ratios, 0.9)
    print(f"final mse {history[-1]['mse']:.5f}; scatter needs {k90} PCA component(s) for 90%")
    print(f"artifacts in {run_dir}")
    return EXIT_OK


_DIAGNOSE_KEYS = {"embeddings_csv", "head", "limit"}


def cmd_diagnose(args):
    from .diagnostics import (
        EmbeddingRecord,
        dissimilarity_matrix,
        pca_explained_variance,
        read_embeddings_csv,
        write_dissimilarity_csv,
        write_explained_variance_csv,
    )
    from .kernel import QuantumHead

    blob = _load_json(args.config)
    unknown = set(blob) - _DIAGNOSE_KEYS
    if unknown:
        raise ConfigError(f"diagnose config: unknown keys {sorted(unknown)}")
    if "embeddings_csv" not in blob:
        raise ConfigError("diagnose config: missing key 'embeddings_csv'")
    record = read_embeddings_csv(blob["embeddings_csv"])
    limit = blob.get("limit")
    if limit is not None:
        record = EmbeddingRecord(record.matrix[:limit], record.labels[:limit], record.source)
    run_dir = make_run_dir(_out_root(args), blob, "diagnose")
    ratios = pca_explained_variance(record)
    write_explained_variance_csv(os.path.join(run_dir, "explained_variance.csv"), ratios)
    if "head" in blob:
        spec = blob["head"]
        if "checkpoint" in spec:
            with open(os.path.join(spec["checkpoint"], "head.json")) as fh:
                meta = json.load(fh)
            head = QuantumHead(meta["n_qubits"], meta["layers"], np.asarray(meta["theta"]))
        else:
            head = QuantumHead(spec["n"], spec["l"], np.asarray(spec["theta"]))
        matrix = dissimilarity_matrix(head, record)
        write_dissimilarity_csv(os.path.join(run_dir, "dissimilarity.csv"), matrix)
    print(f"diagnostics in {run_dir}")
    return EXIT_OK


def cmd_bench(args):
    from . import circuits as qc
    from .kernel import QuantumHead

    ns = [int(v) for v in args.n.split(",")]
    ls = [int(v) for v in args.l.split(",")]
    rng = np.random.default_rng(args.seed)
    rows = []
    for l in ls:
        for n in ns:
            head = QuantumHead(n, l, np.zeros(qc.metric_theta_count(n, l)))
            phi_l = rng.uniform(-np.pi, np.pi, (args.batch, n))
            phi_r = rng.uniform(-np.pi, np.pi, (args.batch, n))
            head.amplitudes(phi_l[:1], phi_r[:1])  # warm any lazy costs
            start = time.perf_counter()
            head.amplitudes(phi_l, phi_r)
            elapsed = time.perf_counter() - start
            rows.append((n, l, head.plan.width, 1000.0 * elapsed / args.batch))
    text = "n,l,width,ms_per_amplitude\n" + "".join(
        f"{n},{l},{w},{ms:.4f}\n" for n, l, w, ms in rows
    )
    print(text, end="")
    if args.out_dir or "QPROTO_OUT" in os.environ:
        run_dir = make_run_dir(_out_root(args), {"bench": {"n": ns, "l": ls, "batch": args.batch}}, "bench")
        with open(os.path.join(run_dir, "bench.csv"), "w") as fh:
            fh.write(text)
        print(f"bench artifacts in {run_dir}")
    return EXIT_OK


def cmd_verify(args):
    from .verification import run_verification

    results = run_verification(max_qubits=args.n, trials=args.trials, seed=args.seed)
    for res in results:
        print(res.line())
    if all(r.passed for r in results):
        print("all checks passed")
        return EXIT_OK
    print("verification FAILED")
    return EXIT_RUNTIME


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="qproto", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default=None, help="output root (default: $QPROTO_OUT or ./runs)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for batch evaluation; never changes results")

    p = sub.add_parser("train", help="run a few-shot training config")
    p.add_argument("--config", required=True)
    p.add_argument("--theta-sweep", default=None,
                   help="comma-separated theta init ranges; runs one training per range")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh test episodes")
    p.add_argument("--config", required=True)
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lowdim", help="train a low-dimensional task and export feature maps")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", type=int, default=64, help="feature-map grid resolution")
    add_common(p)
    p.set_defaults(func=cmd_lowdim)

    p = sub.add_parser("diagnose", help="PCA and dissimilarity exports for an embedding dump")
    p.add_argument("--config", required=True)
    add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="plan widths and per-amplitude timings")
    p.add_argument("--n", default="8,16,32,64")
    p.add_argument("--l", default="1,2")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the oracle cross-check suites")
    p.add_argument("--n", type=int, default=6, help="max qubit count for oracle instances")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    add_common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    from .data import DataError
    from .lowdim import LowDimError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        parallel.set_threads(args.threads)
        return args.func(args)
    except (ConfigError, LowDimError, DataError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
