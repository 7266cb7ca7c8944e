"""Circuit-bypass diagnostics: PCA explained variance over prequantum
embeddings, quantum dissimilarity matrices for external MDS, and plain CSV
dumps for external t-SNE. Projection algorithms themselves live outside this
package; everything here just produces the matrices they consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DISSIMILARITY_MAX_ROWS = 2000
FIDELITY_FLOOR = 1e-300  # -log floor ~ 690.8; keeps rank order, avoids inf


class DiagnosticsError(ValueError):
    """Raised for records too small or mismatched for an analysis."""


@dataclass(frozen=True)
class EmbeddingRecord:
    """Rows of prequantum embeddings with class labels."""

    matrix: np.ndarray  # (M, n)
    labels: np.ndarray  # (M,)
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.labels.shape[0]:
            raise DiagnosticsError(
                f"matrix {self.matrix.shape} misaligned with labels {self.labels.shape}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise DiagnosticsError("embedding record contains non-finite entries")


def jacobi_eigenvalues(matrix, tol=1e-12, max_sweeps=64):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps the upper triangle in a fixed row-major order until the off-
    diagonal Frobenius norm drops below tol times the matrix norm, so the
    result is deterministic. Returns eigenvalues in descending order.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    d = a.shape[0]
    if a.ndim != 2 or a.shape != (d, d):
        raise DiagnosticsError(f"need a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise DiagnosticsError("matrix is not symmetric")
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(d)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= tol * scale / (d * d):
                    continue
                diff = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(diff) / (abs(diff) + math.sqrt(diff * diff + 1.0)) if diff != 0 else 1.0
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
    return np.sort(np.diag(a))[::-1].copy()


def pca_explained_variance(record):
    """Descending explained-variance ratios of the mean-centered covariance.

    Ratios are eigenvalues normalized to sum 1, computed with the Jacobi
    solver above (negative numerical dust is clipped to zero first).
    """
    x = record.matrix if isinstance(record, EmbeddingRecord) else np.asarray(record, float)
    if x.shape[0] < 2:
        raise DiagnosticsError(f"PCA needs >= 2 rows, got {x.shape[0]}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    values = np.clip(jacobi_eigenvalues(cov), 0.0, None)
    total = values.sum()
    if total == 0.0:
        raise DiagnosticsError("zero total variance; all embeddings identical")
    return values / total


def components_for_threshold(ratios, threshold):
    """Smallest component count whose cumulative ratio reaches the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise DiagnosticsError(f"threshold must be in (0, 1], got {threshold}")
    cum = np.cumsum(np.asarray(ratios, dtype=np.float64))
    hits = np.nonzero(cum >= threshold - 1e-12)[0]
    if hits.size == 0:
        return len(cum)
    return int(hits[0]) + 1


def dissimilarity_matrix(head, record):
    """Symmetric pairwise -log fidelity matrix of a record's rows.

    Fidelities below FIDELITY_FLOOR are clamped before the log so exact
    orthogonality yields a large finite entry instead of infinity. The
    diagonal is exactly zero.
    """
    x = record.matrix if isinstance(record, EmbeddingRecord) else np.asarray(record, float)
    m = x.shape[0]
    if m > DISSIMILARITY_MAX_ROWS:
        raise DiagnosticsError(f"{m} rows exceed pairwise limit {DISSIMILARITY_MAX_ROWS}")
    if x.shape[1] != head.n:
        raise DiagnosticsError(f"record dim {x.shape[1]} != head qubit count {head.n}")
    ii, jj = np.triu_indices(m, k=1)
    fid = head.inner_products(x[ii], x[jj]).fidelities
    out = np.zeros((m, m))
    vals = -np.log(np.maximum(fid, FIDELITY_FLOOR))
    out[ii, jj] = vals
    out[jj, ii] = vals
    return out


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

def write_embeddings_csv(path, matrix, labels):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("label," + ",".join(f"phi_{i}" for i in range(matrix.shape[1])) + "\n")
        for lab, row in zip(labels, matrix):
            fh.write(f"{int(lab)}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_embeddings_csv(path):
    labels = []
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "label":
            raise DiagnosticsError(f"{path}: expected 'label' header, got {header[:1]}")
        for line in fh:
            parts = line.strip().split(",")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return EmbeddingRecord(np.asarray(rows), np.asarray(labels), source=path)


def write_dissimilarity_csv(path, matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("," + ",".join(str(i) for i in range(matrix.shape[0])) + "\n")
        for i, row in enumerate(matrix):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def write_explained_variance_csv(path, ratios):
    ratios = np.asarray(ratios, dtype=np.float64)
    cum = np.cumsum(ratios)
    with open(path, "w") as fh:
        fh.write("component,ratio,cumulative\n")
        for i, (r, c) in enumerate(zip(ratios, cum), start=1):
            fh.write(f"{i},{r!r},{c!r}\n")
