"""Dense complex tensors with integer-labelled legs and batched contraction.

Every leg carries an integer label; legs with equal labels on two tensors are
joined when contracting. An optional batch leg (always the first axis) is
broadcast element-wise and never summed, so one contraction evaluates a whole
batch of parameter bindings at once.
"""

from __future__ import annotations

import string

import numpy as np

_LETTERS = string.ascii_letters


class ContractError(ValueError):
    """Raised when tensors cannot be contracted (dimension or label clash)."""


class Tensor:
    """Immutable dense complex tensor.

    labels: one integer per non-batch leg, unique within the tensor.
    data:   complex128 array; shape is (batch, *leg_dims) when batched,
            (*leg_dims,) otherwise. Leg dims are 2 for qubit legs.
    """

    __slots__ = ("labels", "data", "batched")

    def __init__(self, labels, data, batched=False):
        labels = tuple(int(x) for x in labels)
        data = np.asarray(data, dtype=np.complex128)
        expected_ndim = len(labels) + (1 if batched else 0)
        if data.ndim != expected_ndim:
            raise ContractError(
                f"data has {data.ndim} axes, expected {expected_ndim} "
                f"for {len(labels)} labels (batched={batched})"
            )
        if len(set(labels)) != len(labels):
            raise ContractError(f"duplicate leg labels in tensor: {labels}")
        self.labels = labels
        self.data = data
        self.batched = bool(batched)

    @property
    def rank(self):
        """Number of non-batch legs."""
        return len(self.labels)

    @property
    def batch_size(self):
        return self.data.shape[0] if self.batched else None

    def dim_of(self, label):
        offset = 1 if self.batched else 0
        return self.data.shape[offset + self.labels.index(label)]

    def __repr__(self):
        return f"Tensor(labels={self.labels}, shape={self.data.shape}, batched={self.batched})"


def _check_batch(tensors):
    sizes = {t.data.shape[0] for t in tensors if t.batched}
    if len(sizes) > 1:
        raise ContractError(f"batch sizes differ: {sorted(sizes)}")


def _check_shared_dims(tensors):
    dims = {}
    for t in tensors:
        for lab in t.labels:
            d = t.dim_of(lab)
            if dims.setdefault(lab, d) != d:
                raise ContractError(
                    f"label {lab} has mismatched dimensions {dims[lab]} vs {d}"
                )


def contract(tensors, sum_labels):
    """Contract any number of tensors in one einsum, summing `sum_labels`.

    Labels in `sum_labels` must appear on at least one operand and vanish from
    the output; every other label survives. Output legs are ordered by
    ascending label id (after the batch leg, if any operand is batched).
    Evaluated with a single non-optimized einsum so the reduction order is
    fixed and results are bitwise reproducible.
    """
    tensors = list(tensors)
    if not tensors:
        raise ContractError("nothing to contract")
    _check_batch(tensors)
    _check_shared_dims(tensors)

    sum_labels = set(sum_labels)
    all_labels = set()
    for t in tensors:
        all_labels.update(t.labels)
    missing = sum_labels - all_labels
    if missing:
        raise ContractError(f"cannot sum absent labels: {sorted(missing)}")

    out_labels = tuple(sorted(all_labels - sum_labels))
    if len(all_labels) > len(_LETTERS):
        raise ContractError(f"contraction touches {len(all_labels)} labels, max {len(_LETTERS)}")
    letter = {lab: _LETTERS[i] for i, lab in enumerate(sorted(all_labels))}

    operands = []
    for t in tensors:
        term = "".join(letter[lab] for lab in t.labels)
        operands.append("..." + term if t.batched else term)
    out_batched = any(t.batched for t in tensors)
    out_term = "".join(letter[lab] for lab in out_labels)
    eq = ",".join(operands) + "->" + ("..." + out_term if out_batched else out_term)

    data = np.einsum(eq, *[t.data for t in tensors], optimize=False)
    return Tensor(out_labels, data, batched=out_batched)


def contract_pair(a, b):
    """Contract two tensors over all shared labels.

    The result keeps the union of unshared labels, sorted by id, with the
    batch leg (if either operand carries one) broadcast element-wise. Shared
    labels must agree in dimension.
    """
    shared = set(a.labels) & set(b.labels)
    return contract([a, b], shared)
