"""Circuit-to-network conversion, elimination ordering, and plan execution.

A circuit amplitude <0..0|C|0..0> becomes a closed tensor network: one tensor
per gate plus 2n cap vectors. Wire segments between basis-changing gates get
unique integer labels; diagonal gates (ZZ, S-dagger) and the control leg of
CRx reuse the current wire label, which keeps the line graph narrow.

Planning runs once per topology. The elimination order is found on the line
graph (vertices = labels, cliques = tensors), then compiled to a bucket
schedule: each step contracts every tensor holding the eliminated label in a
single einsum, so the peak intermediate rank equals the reported width. The
cached plan is replayed for any number of parameter bindings; bindings carry
an optional batch axis that broadcasts through every contraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import circuits as qc
from .tensors import Tensor, contract

MAX_EXHAUSTIVE_LABELS = 16
MAX_WIDTH = 30

HEURISTICS = ("greedy_min_fill", "greedy_min_degree", "exhaustive")

_plan_calls = 0


def plan_call_count():
    """Number of plan_order invocations so far (plan-reuse observable)."""
    return _plan_calls


class NetworkBuildError(ValueError):
    """Raised when a circuit cannot be converted to a tensor network."""


class PlanError(ValueError):
    """Raised for invalid planning requests (size limits, bad heuristic)."""


class ExecutionError(ValueError):
    """Raised when bindings do not match the planned circuit."""


@dataclass(frozen=True)
class TensorStub:
    """Placeholder for one network tensor; values are generated per binding."""

    kind: str  # 'cap' or a gate kind
    labels: tuple[int, ...]
    gate_pos: int | None = None


@dataclass(frozen=True)
class TensorNetwork:
    circuit: qc.Circuit
    stubs: tuple[TensorStub, ...]
    n_labels: int
    # Closed amplitude networks have no open legs.
    open_labels: tuple[int, ...] = ()

    @property
    def parametric_positions(self):
        return self.circuit.parametric_gate_positions()


def build_network(circuit):
    """Convert a circuit into the amplitude tensor network.

    Wire labels are dense and deterministic: each qubit starts with one label
    for its |0> cap, and every non-diagonal gate advances the wire with a
    fresh label. Diagonal gates attach to the current labels without
    advancing them.
    """
    n = circuit.n_qubits
    wire = list(range(n))
    next_label = n
    stubs = [TensorStub("cap", (q,)) for q in range(n)]
    for pos, g in enumerate(circuit.gates):
        if g.kind in (qc.RX, qc.RY, qc.H):
            q = g.qubits[0]
            out = next_label
            next_label += 1
            stubs.append(TensorStub(g.kind, (out, wire[q]), pos))
            wire[q] = out
        elif g.kind == qc.SDG:
            stubs.append(TensorStub(g.kind, (wire[g.qubits[0]],), pos))
        elif g.kind == qc.ZZ:
            q0, q1 = g.qubits
            stubs.append(TensorStub(g.kind, (wire[q0], wire[q1]), pos))
        elif g.kind == qc.CRX:
            control, target = g.qubits
            out = next_label
            next_label += 1
            stubs.append(TensorStub(g.kind, (wire[control], out, wire[target]), pos))
            wire[target] = out
        else:  # pragma: no cover - circuit validation rejects unknown kinds
            raise NetworkBuildError(f"no tensor rule for gate {g.kind}")
    stubs.extend(TensorStub("cap", (wire[q],)) for q in range(n))
    return TensorNetwork(circuit, tuple(stubs), next_label)


@dataclass(frozen=True)
class BucketStep:
    """One schedule entry: contract `operands`, summing `sums` away."""

    operands: tuple[int, ...]
    sums: tuple[int, ...]
    out_labels: tuple[int, ...]


@dataclass(frozen=True)
class ContractionPlan:
    network: TensorNetwork
    heuristic: str
    order: tuple[int, ...]
    width: int  # max non-batch rank over all schedule outputs (dry-run value)
    steps: tuple[BucketStep, ...]

    def to_json(self):
        return json.dumps(
            {
                "order": list(self.order),
                "width": self.width,
                "schedule": [list(s.operands) for s in self.steps],
            }
        )


# ---------------------------------------------------------------------------
# Line graph and elimination orders
# ---------------------------------------------------------------------------

def line_graph_adjacency(network):
    """vertices = labels; two labels are adjacent iff some tensor holds both."""
    adj = {v: set() for v in range(network.n_labels)}
    for stub in network.stubs:
        for a in stub.labels:
            for b in stub.labels:
                if a != b:
                    adj[a].add(b)
    return adj


def _fill_count(adj, v):
    nbrs = sorted(adj[v])
    missing = 0
    for i, a in enumerate(nbrs):
        adj_a = adj[a]
        for b in nbrs[i + 1:]:
            if b not in adj_a:
                missing += 1
    return missing


def _eliminate(adj, v):
    """Connect v's neighbours into a clique and drop v. Returns new edges."""
    nbrs = sorted(adj[v])
    new_edges = []
    for i, a in enumerate(nbrs):
        for b in nbrs[i + 1:]:
            if b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                new_edges.append((a, b))
    for u in nbrs:
        adj[u].discard(v)
    del adj[v]
    return new_edges


def _order_greedy(adj, min_fill):
    """Greedy elimination order. min_fill=True ranks by (fill, degree, id),
    otherwise by (degree, id). Fill counts are updated incrementally: only
    vertices whose neighbourhood changed are re-scored."""
    adj = {v: set(nb) for v, nb in adj.items()}
    order = []
    fills = {v: _fill_count(adj, v) for v in adj} if min_fill else None
    while adj:
        if min_fill:
            v = min(adj, key=lambda u: (fills[u], len(adj[u]), u))
        else:
            v = min(adj, key=lambda u: (len(adj[u]), u))
        nbrs = set(adj[v])
        new_edges = _eliminate(adj, v)
        order.append(v)
        if min_fill:
            del fills[v]
            dirty = set(nbrs)
            for a, b in new_edges:
                dirty.update(adj[a])
                dirty.update(adj[b])
            for u in dirty & set(adj):
                fills[u] = _fill_count(adj, u)
    return order


def _order_exhaustive(adj):
    """Exact minimum-width elimination order via subset dynamic programming.

    g(S) = best width achievable when S is eliminated first. The degree of v
    as the last vertex of prefix S is the number of surviving vertices
    reachable from v through S - {v}.
    """
    vertices = sorted(adj)
    n = len(vertices)
    if n > MAX_EXHAUSTIVE_LABELS:
        raise PlanError(
            f"exhaustive ordering capped at {MAX_EXHAUSTIVE_LABELS} labels, got {n}"
        )
    pos = {v: i for i, v in enumerate(vertices)}
    masks = [0] * n
    for v, nbrs in adj.items():
        for u in nbrs:
            masks[pos[v]] |= 1 << pos[u]
    full = (1 << n) - 1

    def degree_after(i, eliminated):
        # neighbours of i in the fill graph once `eliminated` is gone
        seen = 1 << i
        frontier = masks[i]
        result = 0
        while frontier:
            frontier &= ~seen
            seen |= frontier
            result |= frontier & ~eliminated
            inner = frontier & eliminated
            frontier = 0
            while inner:
                low = inner & -inner
                inner ^= low
                frontier |= masks[low.bit_length() - 1]
        return (result & ~(1 << i)).bit_count()

    g = {0: 0}
    choice = {}
    by_popcount = sorted(range(1, full + 1), key=int.bit_count)
    for s in by_popcount:
        best = None
        best_v = None
        rest = s
        while rest:
            low = rest & -rest
            rest ^= low
            i = low.bit_length() - 1
            prev = s ^ low
            cand = max(g[prev], degree_after(i, prev))
            if best is None or cand < best or (cand == best and i < best_v):
                best, best_v = cand, i
        g[s] = best
        choice[s] = best_v
    order = []
    s = full
    while s:
        i = choice[s]
        order.append(vertices[i])
        s ^= 1 << i
    order.reverse()
    return order


# ---------------------------------------------------------------------------
# Schedule derivation and planning
# ---------------------------------------------------------------------------

def _derive_schedule(stubs, order):
    """Compile an elimination order into bucket steps.

    Eliminating label v contracts every current tensor holding v in one step.
    Any other label whose holders are all inside the same bucket is summed in
    the same step (it can never change the result and only shrinks outputs).
    """
    holders = {}
    labels_of = {}
    for tid, stub in enumerate(stubs):
        labels_of[tid] = frozenset(stub.labels)
        for lab in stub.labels:
            holders.setdefault(lab, set()).add(tid)
    next_id = len(stubs)
    live = set(labels_of)
    steps = []
    width = 0

    def emit(ids, sums):
        nonlocal next_id, width
        union = set()
        for i in ids:
            union.update(labels_of[i])
        out = tuple(sorted(union - sums))
        steps.append(BucketStep(tuple(ids), tuple(sorted(sums)), out))
        for i in ids:
            live.discard(i)
            del labels_of[i]
        for lab in union:
            if lab in sums:
                del holders[lab]
            else:
                holders[lab] -= set(ids)
                holders[lab].add(next_id)
        labels_of[next_id] = frozenset(out)
        live.add(next_id)
        width = max(width, len(out))
        next_id += 1

    for v in order:
        ids = sorted(holders.get(v, ()))
        if not ids:
            continue  # summed as a side effect of an earlier bucket
        idset = set(ids)
        union = set()
        for i in ids:
            union.update(labels_of[i])
        sums = {lab for lab in union if holders[lab] <= idset}
        emit(ids, sums)

    remaining = sorted(live)
    while len(remaining) > 1:
        emit(remaining[:2], set())
        remaining = sorted(live)
    return tuple(steps), width


def plan_order(network, heuristic="greedy_min_fill"):
    """Find an elimination order on the line graph and compile it to a plan.

    Deterministic for fixed inputs: ties are broken by lowest label id.
    Refuses plans whose width exceeds MAX_WIDTH instead of thrashing.
    """
    global _plan_calls
    if heuristic not in HEURISTICS:
        raise PlanError(f"unknown heuristic {heuristic!r}, expected one of {HEURISTICS}")
    _plan_calls += 1
    adj = line_graph_adjacency(network)
    if heuristic == "exhaustive":
        order = _order_exhaustive(adj)
    else:
        order = _order_greedy(adj, min_fill=(heuristic == "greedy_min_fill"))
    steps, width = _derive_schedule(network.stubs, order)
    if width > MAX_WIDTH:
        raise PlanError(f"plan width {width} exceeds limit {MAX_WIDTH}; refusing")
    return ContractionPlan(network, heuristic, tuple(order), width, steps)


def plan_from_json(network, text):
    """Rebuild a plan from its JSON dump, verifying it against `network`."""
    blob = json.loads(text)
    order = tuple(blob["order"])
    if sorted(order) != list(range(network.n_labels)):
        raise PlanError("dumped order is not a permutation of the network labels")
    steps, width = _derive_schedule(network.stubs, order)
    if width != blob["width"]:
        raise PlanError(f"dumped width {blob['width']} != derived width {width}")
    if [list(s.operands) for s in steps] != blob["schedule"]:
        raise PlanError("dumped schedule does not match derived schedule")
    return ContractionPlan(network, "dump", order, width, steps)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class Bindings:
    """Parameter values for one executed batch.

    phi/theta: (batch, n_slots) arrays for the circuit's slot families.
    gate_offsets: optional (batch, n_parametric_gates) array of extra angle
    added per gate occurrence, indexed by the circuit's parametric gate
    order. Used by the amplitude-shift gradient rule.
    """

    phi: np.ndarray | None = None
    theta: np.ndarray | None = None
    gate_offsets: np.ndarray | None = None

    def batch_size(self):
        for arr in (self.phi, self.theta, self.gate_offsets):
            if arr is not None:
                return arr.shape[0]
        return None


def _as_2d(arr, n_slots, name, batch):
    if n_slots == 0:
        return None
    if arr is None:
        raise ExecutionError(f"circuit requires {name} bindings ({n_slots} slots)")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape != (batch, n_slots):
        raise ExecutionError(
            f"{name} bindings must have shape ({batch}, {n_slots}), got {arr.shape}"
        )
    return arr


def _rx_block(angles):
    half = np.asarray(angles) / 2
    c, s = np.cos(half), np.sin(half)
    out = np.empty(np.shape(half) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -1j * s
    out[..., 1, 0] = -1j * s
    out[..., 1, 1] = c
    return out


def _ry_block(angles):
    half = np.asarray(angles) / 2
    c, s = np.cos(half), np.sin(half)
    out = np.empty(np.shape(half) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _zz_block(angles):
    half = np.asarray(angles) / 2
    em, ep = np.exp(-1j * half), np.exp(1j * half)
    out = np.empty(np.shape(half) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = em
    out[..., 0, 1] = ep
    out[..., 1, 0] = ep
    out[..., 1, 1] = em
    return out


def _crx_block(angles):
    out = np.zeros(np.shape(np.asarray(angles)) + (2, 2, 2), dtype=np.complex128)
    out[..., 0, 0, 0] = 1.0
    out[..., 0, 1, 1] = 1.0
    out[..., 1, :, :] = _rx_block(angles)
    return out


_BLOCKS = {qc.RX: _rx_block, qc.RY: _ry_block, qc.ZZ: _zz_block, qc.CRX: _crx_block}
_CAP = np.array([1.0, 0.0], dtype=np.complex128)
_SDG_DIAG = np.array([1.0, -1j], dtype=np.complex128)


def _materialize(network, bindings):
    circuit = network.circuit
    batch = bindings.batch_size() if bindings is not None else None
    phi = theta = offsets = None
    if batch is not None:
        phi = _as_2d(bindings.phi, circuit.phi_slots, "phi", batch)
        theta = _as_2d(bindings.theta, circuit.theta_slots, "theta", batch)
        if bindings.gate_offsets is not None:
            offsets = np.asarray(bindings.gate_offsets, dtype=np.float64)
            n_param = len(network.parametric_positions)
            if offsets.shape != (batch, n_param):
                raise ExecutionError(
                    f"gate_offsets must have shape ({batch}, {n_param}), got {offsets.shape}"
                )
    elif circuit.phi_slots or circuit.theta_slots:
        raise ExecutionError("circuit has parameter slots but no bindings were given")

    offset_col = {pos: k for k, pos in enumerate(network.parametric_positions)}
    tensors = []
    for stub in network.stubs:
        if stub.kind == "cap":
            tensors.append(Tensor(stub.labels, _CAP))
            continue
        if stub.kind == qc.H:
            tensors.append(Tensor(stub.labels, qc.H_MATRIX))
            continue
        if stub.kind == qc.SDG:
            tensors.append(Tensor(stub.labels, _SDG_DIAG))
            continue
        gate = circuit.gates[stub.gate_pos]
        if isinstance(gate.param, qc.ParamRef):
            source = phi if gate.param.family == qc.PHI else theta
            if source is None:
                raise ExecutionError(f"missing {gate.param.family} binding for gate {stub.gate_pos}")
            angles = gate.param.sign * source[:, gate.param.index]
        else:
            angles = float(gate.param)
        if offsets is not None:
            angles = angles + offsets[:, offset_col[stub.gate_pos]]
        data = _BLOCKS[gate.kind](angles)
        tensors.append(Tensor(stub.labels, data, batched=(np.ndim(angles) == 1)))
    return tensors, batch


def execute_plan(plan, bindings=None, stats=None):
    """Replay the cached schedule on a batch of parameter bindings.

    Returns a (batch,) complex array, or a complex scalar when the circuit is
    fully bound and `bindings` is None. Results are identical to executing
    each batch element separately (same per-element reduction order).
    """
    tensors, batch = _materialize(plan.network, bindings)
    peak = 0
    for step in plan.steps:
        operands = [tensors[i] for i in step.operands]
        result = contract(operands, step.sums)
        if result.labels != step.out_labels:  # pragma: no cover - internal invariant
            raise ExecutionError(f"schedule out labels {step.out_labels} != {result.labels}")
        peak = max(peak, result.rank)
        for i in step.operands:
            tensors[i] = None
        tensors.append(result)
    if stats is not None:
        stats["peak_rank"] = peak
    final = tensors[-1]
    if final.batched:
        out = final.data.reshape(final.data.shape[0])
        return out
    value = complex(final.data.reshape(()))
    if batch is not None:
        return np.full(batch, value, dtype=np.complex128)
    return value


def amplitude(circuit, bindings=None, heuristic="greedy_min_fill"):
    """One-shot amplitude evaluation: build, plan, execute."""
    plan = plan_order(build_network(circuit), heuristic)
    return execute_plan(plan, bindings)
