"""Oracle cross-check suites.

Every numerical path in the package has an independent oracle: tensor-network
amplitudes against the brute-force statevector and (at theta = 0) the closed
cosine product; shift-rule gradients against central finite differences;
Hadamard-test statistics against direct amplitudes; prototypical linearity
against an explicitly averaged statevector prototype. The CLI `verify`
subcommand and the acceptance tests both run these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import circuits as qc
from . import nn as qnn
from .engine import FewShotModel, quantum_episode_loss
from .kernel import QuantumHead, closed_form_inner, hadamard_estimate, hadamard_exact_bias


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name}: worst {self.worst:.3e} vs tol {self.tolerance:.1e}{extra}"


def _close(a, b, rtol, atol):
    """Worst normalized deviation of a from b: max over components of
    |a-b| / (rtol*max(|a|,|b|) + atol), so values <= 1 pass."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = rtol * np.maximum(np.abs(a), np.abs(b)) + atol
    return float(np.max(np.abs(a - b) / denom, initial=0.0))


def check_amplitude_oracles(max_qubits=8, trials=200, seed=7, tol=1e-10):
    """Random inversion-test instances: tensor network vs statevector, and
    additionally vs the closed cosine product at theta = 0."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        n = int(rng.integers(1, max_qubits + 1))
        l = int(rng.integers(1, 3))
        phi_i = rng.uniform(-math.pi, math.pi, n)
        phi_j = rng.uniform(-math.pi, math.pi, n)
        zero_theta = trial % 2 == 0
        theta = (
            np.zeros(qc.metric_theta_count(n, l))
            if zero_theta
            else rng.uniform(0, 2 * math.pi, qc.metric_theta_count(n, l))
        )
        head = QuantumHead(n, l, theta)
        tn_amp = complex(head.amplitudes(phi_i[None, :], phi_j[None, :])[0])
        sv_amp = qc.amplitude_all_zeros(qc.build_inversion_test(n, l, phi_i, phi_j, theta))
        worst = max(worst, abs(tn_amp - sv_amp))
        if zero_theta:
            worst = max(worst, abs(tn_amp - closed_form_inner(phi_i, phi_j, l)))
    return CheckResult("amplitude oracles (tensor net vs statevector vs closed form)",
                       worst <= tol, worst, tol, f"{trials} instances, n <= {max_qubits}")


def check_closed_form_large(n=64, trials=50, seed=11, tol=1e-9):
    """64-qubit scale check: tensor-network amplitudes at theta = 0 against
    the closed form, the only exact oracle at this size."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for l in (1, 2):
        head = QuantumHead(n, l, np.zeros(qc.metric_theta_count(n, l)))
        phi_i = rng.uniform(-math.pi, math.pi, (trials, n))
        phi_j = rng.uniform(-math.pi, math.pi, (trials, n))
        amps = head.amplitudes(phi_i, phi_j)
        expected = np.array(
            [closed_form_inner(phi_i[t], phi_j[t], l) for t in range(trials)]
        )
        worst = max(worst, float(np.max(np.abs(amps - expected))))
    return CheckResult(f"closed-form agreement at n={n}, l in (1, 2)",
                       worst <= tol, worst, tol, f"{trials} pairs per l")


def check_quantum_gradients(trials=50, seed=3, rtol=1e-6, atol=1e-9):
    """Amplitude-shift gradients vs central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 5))
        l = int(rng.integers(1, 3))
        theta = rng.uniform(-1.0, 1.0, qc.metric_theta_count(n, l))
        head = QuantumHead(n, l, theta)
        batch = int(rng.integers(1, 4))
        phi_l = rng.uniform(-math.pi, math.pi, (batch, n))
        phi_r = rng.uniform(-math.pi, math.pi, (batch, n))
        adjoint = rng.normal(size=batch) + 1j * rng.normal(size=batch)
        got = head.grad(phi_l, phi_r, adjoint)
        want = head.grad_fd(phi_l, phi_r, adjoint)
        for g, w in zip(got, want):
            worst = max(worst, _close(g, w, rtol, atol))
    return CheckResult("shift-rule gradients vs finite differences",
                       worst <= 1.0, worst, 1.0, f"{trials} instances, rtol {rtol:g}")


def check_mlp_gradients(trials=50, seed=5, rtol=1e-5, atol=1e-8):
    """Reverse-mode MLP gradients vs central finite differences (params and inputs)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = 1e-6
    for _ in range(trials):
        widths = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(2, 5)))]
        mlp = qnn.Mlp.init_random(widths, int(rng.integers(2 ** 31)))
        x = rng.normal(size=(int(rng.integers(1, 4)), widths[0]))
        target = rng.normal(size=(x.shape[0], widths[-1]))

        def loss_value():
            out, _ = mlp.forward(x)
            return 0.5 * float(((out - target) ** 2).sum())

        out, cache = mlp.forward(x)
        grads, d_x = mlp.backward(cache, out - target)

        params = mlp.parameters()
        for p, g in zip(params, grads):
            flat_p, flat_g = p.ravel(), np.asarray(g).ravel()
            for idx in range(flat_p.size):
                keep = flat_p[idx]
                flat_p[idx] = keep + h
                plus = loss_value()
                flat_p[idx] = keep - h
                minus = loss_value()
                flat_p[idx] = keep
                worst = max(worst, _close(flat_g[idx], (plus - minus) / (2 * h), rtol, atol))
        flat_x, flat_dx = x.ravel(), np.asarray(d_x).ravel()
        for idx in range(flat_x.size):
            keep = flat_x[idx]
            flat_x[idx] = keep + h
            plus = loss_value()
            flat_x[idx] = keep - h
            minus = loss_value()
            flat_x[idx] = keep
            worst = max(worst, _close(flat_dx[idx], (plus - minus) / (2 * h), rtol, atol))
    return CheckResult("MLP reverse-mode gradients vs finite differences",
                       worst <= 1.0, worst, 1.0, f"{trials} nets, rtol {rtol:g}")


def _episode_loss_only(model, episode):
    """Loss value without gradients, for finite-difference probes."""
    from .engine import episode_probabilities

    probs = episode_probabilities(model, episode)
    rows = np.arange(probs.shape[0])
    if model.loss_mode == "negative_probability":
        return -float(probs[rows, episode.query_slot].mean())
    logp = np.log(probs[rows, episode.query_slot])
    return -float(logp.mean())


def check_hybrid_gradients(trials=10, seed=13, rtol=1e-5, atol=1e-7):
    """End-to-end hybrid gradient (encoder parameters and theta) of the
    quantum episode loss vs central finite differences of the loss value.

    Note the softmax-log FD probe only matches when probabilities are the
    softmax kind, so this check runs the default negative-probability loss.
    """
    from . import data as qd

    rng = np.random.default_rng(seed)
    worst = 0.0
    h = 1e-5
    for _ in range(trials):
        n = 3
        l = 1
        dim = 4
        dataset = qd.synth_classes(6, 6, dim, 0.3, int(rng.integers(2 ** 31)))
        qd.split_classes(dataset, 2, 0)
        episode = qd.sample_episode(dataset, qd.TRAIN, 2, 2, 1, rng)
        encoder = qnn.Mlp.init_random([dim, 5, n], int(rng.integers(2 ** 31)))
        theta = rng.uniform(-0.5, 0.5, qc.metric_theta_count(n, l))
        model = FewShotModel(encoder, "quantum", QuantumHead(n, l, theta))

        _, enc_grads, d_theta = quantum_episode_loss(model, episode)
        params = encoder.parameters() + [model.quantum.theta]
        grads = enc_grads + [d_theta]
        for p, g in zip(params, grads):
            flat_p, flat_g = p.ravel(), np.asarray(g).ravel()
            for idx in range(flat_p.size):
                keep = flat_p[idx]
                flat_p[idx] = keep + h
                plus = _episode_loss_only(model, episode)
                flat_p[idx] = keep - h
                minus = _episode_loss_only(model, episode)
                flat_p[idx] = keep
                worst = max(worst, _close(flat_g[idx], (plus - minus) / (2 * h), rtol, atol))
    return CheckResult("hybrid episode gradients vs finite differences",
                       worst <= 1.0, worst, 1.0, f"{trials} episodes, rtol {rtol:g}")


def check_hadamard_exact(trials=30, seed=17, max_qubits=8, tol=1e-10):
    """Exact ancilla bias P(0)-P(1) vs Re/Im of the direct amplitude."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, max_qubits + 1))
        l = int(rng.integers(1, 3))
        phi_i = rng.uniform(-math.pi, math.pi, n)
        phi_j = rng.uniform(-math.pi, math.pi, n)
        theta = rng.uniform(0, 2 * math.pi, qc.metric_theta_count(n, l))
        amp = qc.amplitude_all_zeros(qc.build_inversion_test(n, l, phi_i, phi_j, theta))
        re = hadamard_exact_bias(qc.build_hadamard_test(n, l, phi_i, phi_j, theta, "real"))
        im = hadamard_exact_bias(qc.build_hadamard_test(n, l, phi_i, phi_j, theta, "imag"))
        worst = max(worst, abs(re - amp.real), abs(im - amp.imag))
    return CheckResult("Hadamard-test exact statistics vs direct amplitude",
                       worst <= tol, worst, tol, f"{trials} instances, n <= {max_qubits}")


def check_hadamard_scaling(shots_grid=(100, 10_000, 1_000_000), n_seeds=20, seed=23,
                           slope_target=-0.5, slope_tol=0.1):
    """Sampled-estimator error must scale like 1/sqrt(shots): the log-log
    slope of mean |error| over the shots grid sits within slope_target +- tol."""
    n, l = 2, 1
    rng = np.random.default_rng(seed)
    phi_i = rng.uniform(-math.pi, math.pi, n)
    phi_j = rng.uniform(-math.pi, math.pi, n)
    theta = rng.uniform(0, 1.0, qc.metric_theta_count(n, l))
    circuit = qc.build_hadamard_test(n, l, phi_i, phi_j, theta, "real")
    exact = hadamard_exact_bias(circuit)
    mean_errs = []
    for shots in shots_grid:
        errs = [
            abs(hadamard_estimate(circuit, shots, seed=1000 * shots + s) - exact)
            for s in range(n_seeds)
        ]
        mean_errs.append(np.mean(errs))
    slope = np.polyfit(np.log(np.asarray(shots_grid, float)), np.log(mean_errs), 1)[0]
    dev = abs(slope - slope_target)
    return CheckResult("Hadamard estimator 1/sqrt(shots) scaling",
                       dev <= slope_tol, dev, slope_tol,
                       f"slope {slope:.3f} over shots {shots_grid}")


def check_prototypical_linearity(trials=20, seed=29, max_qubits=8, tol=1e-10):
    """Prototypical score (mean of pair amplitudes) vs the inner product with
    the explicitly averaged statevector prototype."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, max_qubits + 1))
        l = int(rng.integers(1, 3))
        n_way = int(rng.integers(2, 4))
        k = int(rng.integers(1, 4))
        theta = rng.uniform(0, 2 * math.pi, qc.metric_theta_count(n, l))
        head = QuantumHead(n, l, theta)
        support = rng.uniform(-math.pi, math.pi, (n_way, k, n))
        query = rng.uniform(-math.pi, math.pi, n)
        scores, _ = head.prototypical_scores(support, query)
        query_state = head.encode_state(query)
        for c in range(n_way):
            proto = np.mean([head.encode_state(phi) for phi in support[c]], axis=0)
            worst = max(worst, abs(scores[c] - np.vdot(proto, query_state)))
    return CheckResult("prototypical linearity vs averaged statevector prototype",
                       worst <= tol, worst, tol, f"{trials} episodes, n <= {max_qubits}")


def run_verification(max_qubits=6, trials=50, seed=7):
    """Full oracle suite; returns the list of CheckResults."""
    return [
        check_amplitude_oracles(max_qubits=max_qubits, trials=trials, seed=seed),
        check_closed_form_large(trials=min(trials, 50), seed=seed + 1),
        check_quantum_gradients(trials=min(trials, 50), seed=seed + 2),
        check_mlp_gradients(trials=min(trials, 50), seed=seed + 3),
        check_hybrid_gradients(trials=max(3, trials // 10), seed=seed + 4),
        check_hadamard_exact(trials=min(trials, 30), seed=seed + 5, max_qubits=min(max_qubits, 8)),
        check_hadamard_scaling(seed=seed + 6),
        check_prototypical_linearity(trials=min(trials, 20), seed=seed + 7,
                                     max_qubits=min(max_qubits, 8)),
    ]
