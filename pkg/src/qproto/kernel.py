"""Fidelity kernel on top of the cached inversion-test plan.

Distances between encoded samples are state fidelities
|<Psi(x_i)|Psi(x_j)>|^2, evaluated as one batched tensor-network amplitude
per pair. Prototypical class scores average the complex amplitudes (the
inner product is linear; the fidelity is not), and gradients use the exact
amplitude-shift rule da/d(angle) = a(angle + pi) / 2, valid because every
gate generator squares to the identity.
"""

from __future__ import annotations

import math

import numpy as np

from . import circuits as qc
from . import parallel
from .planner import Bindings, build_network, execute_plan, plan_order

FD_STEP = 1e-5
FIDELITY_SLACK = 1e-9


class KernelError(ValueError):
    """Raised for malformed kernel inputs."""


class DegenerateEpisodeError(RuntimeError):
    """All prototypical scores are exactly zero; probabilities are undefined."""


_plan_cache = {}


def inversion_plan(n, l, heuristic="greedy_min_fill"):
    """Plan for the (n, l) inversion-test topology, computed once and reused
    for every binding and batch element."""
    key = (n, l, heuristic)
    if key not in _plan_cache:
        network = build_network(qc.inversion_template(n, l))
        _plan_cache[key] = plan_order(network, heuristic)
    return _plan_cache[key]


def clear_plan_cache():
    _plan_cache.clear()


class InnerProductBatch:
    """Complex amplitudes and their fidelities for a batch of pairs."""

    __slots__ = ("amps", "fidelities")

    def __init__(self, amps):
        amps = np.asarray(amps, dtype=np.complex128)
        fid = np.abs(amps) ** 2
        worst = fid.max(initial=0.0)
        if worst > 1.0 + FIDELITY_SLACK:
            raise KernelError(f"fidelity {worst} exceeds 1 beyond tolerance; simulator bug?")
        self.amps = amps
        self.fidelities = np.clip(fid, 0.0, 1.0)


class QuantumHead:
    """Quantum distance head: n qubits fed by n prequantum angles, l encoding
    layers, and a trainable circuit-parameter vector theta."""

    def __init__(self, n, l, theta, heuristic="greedy_min_fill"):
        theta = np.asarray(theta, dtype=np.float64)
        expected = qc.metric_theta_count(n, l)
        if theta.shape != (expected,):
            raise KernelError(f"theta must have shape ({expected},), got {theta.shape}")
        self.n = int(n)
        self.l = int(l)
        self.theta = theta.copy()
        self.plan = inversion_plan(n, l, heuristic)
        template = self.plan.network.circuit
        # Per parametric gate: (family, slot index, sign), in offset-column order.
        self._gate_slots = tuple(
            template.gates[pos].param for pos in self.plan.network.parametric_positions
        )

    @property
    def theta_count(self):
        return self.theta.size

    # -- evaluation ---------------------------------------------------------

    def _run(self, phi_cat, theta_rows, gate_offsets=None):
        def chunk(lo, hi):
            b = Bindings(
                phi=phi_cat[lo:hi],
                theta=theta_rows[lo:hi],
                gate_offsets=None if gate_offsets is None else gate_offsets[lo:hi],
            )
            return execute_plan(self.plan, b)

        return parallel.map_chunked(chunk, phi_cat.shape[0])

    def amplitudes(self, phi_left, phi_right, gate_offsets=None):
        """<Psi(phi_left)|Psi(phi_right)> for row-aligned embedding batches."""
        phi_left = _rows(phi_left, self.n, "phi_left")
        phi_right = _rows(phi_right, self.n, "phi_right")
        if phi_left.shape[0] != phi_right.shape[0]:
            raise KernelError(
                f"pairwise mode needs equal batch sizes, got {phi_left.shape[0]} "
                f"and {phi_right.shape[0]}"
            )
        phi_cat = np.concatenate([phi_right, phi_left], axis=1)
        theta_rows = np.broadcast_to(self.theta, (phi_cat.shape[0], self.theta.size))
        return self._run(phi_cat, np.ascontiguousarray(theta_rows), gate_offsets)

    def inner_products(self, phi_left, phi_right):
        return InnerProductBatch(self.amplitudes(phi_left, phi_right))

    def encode_state(self, phi):
        """Statevector of U(phi, theta)|0..0> (oracle path, n <= 20)."""
        circuit = qc.build_metric_ansatz(self.n, self.l)
        return qc.statevector_simulate(circuit, phi=np.asarray(phi), theta=self.theta)

    # -- few-shot scores ----------------------------------------------------

    def prototypical_scores(self, support_phi, query_phi):
        """Per-class mean complex amplitude against one query, plus the
        normalized probabilities |score_c|^2 / sum.

        support_phi: (n_way, k, n) embeddings grouped by class.
        """
        support_phi = np.asarray(support_phi, dtype=np.float64)
        if support_phi.ndim != 3 or support_phi.shape[2] != self.n:
            raise KernelError(f"support must be (n_way, k, {self.n}), got {support_phi.shape}")
        n_way, k, _ = support_phi.shape
        flat = support_phi.reshape(n_way * k, self.n)
        query = np.broadcast_to(np.asarray(query_phi, dtype=np.float64), flat.shape)
        amps = self.amplitudes(flat, query).reshape(n_way, k)
        scores = amps.mean(axis=1)
        return scores, probabilities_from_scores(scores)

    def matching_scores(self, support_phi, query_phi):
        """Pairwise fidelities against one query, no prototype averaging."""
        support_phi = np.asarray(support_phi, dtype=np.float64)
        flat = support_phi.reshape(-1, self.n)
        query = np.broadcast_to(np.asarray(query_phi, dtype=np.float64), flat.shape)
        return self.inner_products(flat, query).fidelities.reshape(support_phi.shape[:-1])

    # -- gradients ----------------------------------------------------------

    def grad(self, phi_left, phi_right, adjoint):
        """Exact gradients of a loss through a batch of pair amplitudes.

        adjoint[b] = dL/d(Re a_b) + i dL/d(Im a_b). Each gate occurrence
        contributes sign * a(shifted by pi at that gate) / 2 to its slot's
        amplitude derivative; phi_mu collects its l+1 occurrences per side and
        theta its occurrence in both halves.

        Returns (dL/dphi_left, dL/dphi_right, dL/dtheta).
        """
        phi_left = _rows(phi_left, self.n, "phi_left")
        phi_right = _rows(phi_right, self.n, "phi_right")
        adjoint = np.asarray(adjoint, dtype=np.complex128)
        batch = phi_left.shape[0]
        n_gates = len(self._gate_slots)

        mega_left = np.repeat(phi_left, n_gates, axis=0)
        mega_right = np.repeat(phi_right, n_gates, axis=0)
        offsets = np.tile(np.eye(n_gates) * math.pi, (batch, 1))
        shifted = self.amplitudes(mega_left, mega_right, gate_offsets=offsets)
        shifted = shifted.reshape(batch, n_gates)

        d_right = np.zeros((batch, self.n), dtype=np.complex128)
        d_left = np.zeros((batch, self.n), dtype=np.complex128)
        d_theta = np.zeros((batch, self.theta.size), dtype=np.complex128)
        for g, ref in enumerate(self._gate_slots):
            contrib = ref.sign * shifted[:, g] / 2.0
            if ref.family == qc.PHI:
                if ref.index < self.n:
                    d_right[:, ref.index] += contrib
                else:
                    d_left[:, ref.index - self.n] += contrib
            else:
                d_theta[:, ref.index] += contrib

        weight = np.conj(adjoint)[:, None]
        return (
            np.real(weight * d_left),
            np.real(weight * d_right),
            np.real(weight * d_theta).sum(axis=0),
        )

    def grad_fd(self, phi_left, phi_right, adjoint, step=FD_STEP):
        """Central finite-difference oracle with the same contract as grad()."""
        phi_left = _rows(phi_left, self.n, "phi_left")
        phi_right = _rows(phi_right, self.n, "phi_right")
        adjoint = np.asarray(adjoint, dtype=np.complex128)
        batch = phi_left.shape[0]

        def d_amp(build):
            plus, minus = build(step), build(-step)
            return (plus - minus) / (2 * step)

        d_left = np.zeros((batch, self.n))
        d_right = np.zeros((batch, self.n))
        weight = np.conj(adjoint)
        for mu in range(self.n):
            def left_amp(h, mu=mu):
                bumped = phi_left.copy()
                bumped[:, mu] += h
                return self.amplitudes(bumped, phi_right)

            def right_amp(h, mu=mu):
                bumped = phi_right.copy()
                bumped[:, mu] += h
                return self.amplitudes(phi_left, bumped)

            d_left[:, mu] = np.real(weight * d_amp(left_amp))
            d_right[:, mu] = np.real(weight * d_amp(right_amp))

        d_theta = np.zeros(self.theta.size)
        base = self.theta.copy()
        for t in range(self.theta.size):
            def theta_amp(h, t=t):
                self.theta = base.copy()
                self.theta[t] += h
                try:
                    return self.amplitudes(phi_left, phi_right)
                finally:
                    self.theta = base
            d_theta[t] = np.real(weight * d_amp(theta_amp)).sum()
        return d_left, d_right, d_theta


def _rows(arr, n, name):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise KernelError(f"{name} must be (batch, {n}), got {arr.shape}")
    return arr


def probabilities_from_scores(scores):
    """Normalize |score_c|^2 into class probabilities; raises on all-zero."""
    weights = np.abs(np.asarray(scores, dtype=np.complex128)) ** 2
    total = weights.sum()
    if total == 0.0:
        raise DegenerateEpisodeError("every class score is zero; probabilities undefined")
    return weights / total


def closed_form_inner(phi_i, phi_j, l):
    """Unentangled (theta = 0) inner product: prod_mu cos((l+1) dphi_mu / 2).

    Each phi_mu drives l+1 stacked Rx gates on its qubit, so the per-qubit
    Bloch angle is (l+1) phi_mu / 2 and the product state inner product is a
    plain cosine product. Only valid as an oracle at theta = 0.
    """
    phi_i = np.asarray(phi_i, dtype=np.float64)
    phi_j = np.asarray(phi_j, dtype=np.float64)
    if phi_i.shape != phi_j.shape:
        raise KernelError(f"embedding shapes differ: {phi_i.shape} vs {phi_j.shape}")
    return complex(np.prod(np.cos((l + 1) * (phi_i - phi_j) / 2.0)))


def hadamard_estimate(circuit, shots, seed):
    """Shot-sampled ancilla bias (count0 - count1)/shots of a Hadamard-test
    circuit. Exact marginals come from the statevector; only the sampling is
    stochastic, and it is deterministic for a fixed seed."""
    if shots <= 0:
        raise KernelError(f"shots must be positive, got {shots}")
    ancilla = circuit.n_qubits - 1
    state = qc.statevector_simulate(circuit)
    p0 = min(max(qc.qubit_prob0(state, ancilla, circuit.n_qubits), 0.0), 1.0)
    rng = np.random.default_rng(seed)
    count0 = rng.binomial(shots, p0)
    return (2 * count0 - shots) / shots


def hadamard_exact_bias(circuit):
    """Exact P(ancilla=0) - P(ancilla=1) of a Hadamard-test circuit."""
    ancilla = circuit.n_qubits - 1
    state = qc.statevector_simulate(circuit)
    return 2.0 * qc.qubit_prob0(state, ancilla, circuit.n_qubits) - 1.0
