import math

import numpy as np
import pytest

from qproto import circuits as qc


def kinds(circuit):
    return [g.kind for g in circuit.gates]


class TestMetricAnsatz:
    def test_single_qubit_single_layer_structure(self):
        circ = qc.build_metric_ansatz(1, 1)
        assert kinds(circ) == [qc.RX, qc.RY, qc.RX]
        assert circ.phi_slots == 1 and circ.theta_slots == 1

    def test_two_qubit_single_layer_structure(self):
        circ = qc.build_metric_ansatz(2, 1)
        assert kinds(circ) == [qc.RX, qc.RX, qc.ZZ, qc.RY, qc.RY, qc.RX, qc.RX]
        assert circ.phi_slots == 2 and circ.theta_slots == 3
        zz = circ.gates[2]
        assert zz.qubits == (0, 1) and zz.param.index == 0

    def test_theta_slot_formula_matches_gate_enumeration(self):
        circ = qc.build_metric_ansatz(64, 2)
        assert circ.theta_slots == 254
        theta_refs = {
            g.param.index for g in circ.gates
            if isinstance(g.param, qc.ParamRef) and g.param.family == qc.THETA
        }
        assert theta_refs == set(range(254))

    def test_each_phi_slot_used_l_plus_1_times(self):
        circ = qc.build_metric_ansatz(3, 2)
        counts = {}
        for g in circ.gates:
            if isinstance(g.param, qc.ParamRef) and g.param.family == qc.PHI:
                counts[g.param.index] = counts.get(g.param.index, 0) + 1
        assert counts == {0: 3, 1: 3, 2: 3}

    def test_rejects_empty(self):
        with pytest.raises(qc.BuildError):
            qc.build_metric_ansatz(0, 1)
        with pytest.raises(qc.BuildError):
            qc.build_metric_ansatz(2, 0)


class TestInversionTest:
    def test_identical_samples_give_unit_amplitude(self):
        rng = np.random.default_rng(5)
        phi = rng.uniform(-math.pi, math.pi, 3)
        theta = rng.uniform(0, 2 * math.pi, qc.metric_theta_count(3, 2))
        amp = qc.amplitude_all_zeros(qc.build_inversion_test(3, 2, phi, phi, theta))
        assert amp == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_single_qubit_pair(self):
        amp = qc.amplitude_all_zeros(
            qc.build_inversion_test(1, 1, [0.0], [math.pi / 2], [0.0])
        )
        assert abs(amp) == pytest.approx(0.0, abs=1e-12)

    def test_gate_count_doubles_ansatz(self):
        for n, l in ((1, 1), (3, 1), (2, 2)):
            ansatz = qc.build_metric_ansatz(n, l)
            inv = qc.build_inversion_test(
                n, l, np.zeros(n), np.zeros(n), np.zeros(qc.metric_theta_count(n, l))
            )
            assert len(inv.gates) == 2 * len(ansatz.gates)

    def test_binding_length_mismatch(self):
        with pytest.raises(qc.BindingError):
            qc.build_inversion_test(2, 1, [0.0], [0.0, 0.0], [0.0, 0.0, 0.0])


class TestHadamardTest:
    def test_identity_case_ancilla_stays_zero(self):
        phi = np.array([0.3, -0.7])
        circ = qc.build_hadamard_test(2, 1, phi, phi, np.zeros(3), "real")
        state = qc.statevector_simulate(circ)
        assert qc.qubit_prob0(state, 2, 3) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_pair_gives_even_odds(self):
        circ = qc.build_hadamard_test(1, 1, [0.0], [math.pi / 2], [0.0], "real")
        state = qc.statevector_simulate(circ)
        assert qc.qubit_prob0(state, 1, 2) == pytest.approx(0.5, abs=1e-12)

    def test_real_and_imag_parts_match_direct_amplitude(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            n = int(rng.integers(1, 5))
            l = int(rng.integers(1, 3))
            phi_i = rng.uniform(-math.pi, math.pi, n)
            phi_j = rng.uniform(-math.pi, math.pi, n)
            theta = rng.uniform(0, 2 * math.pi, qc.metric_theta_count(n, l))
            amp = qc.amplitude_all_zeros(qc.build_inversion_test(n, l, phi_i, phi_j, theta))
            for part, want in (("real", amp.real), ("imag", amp.imag)):
                circ = qc.build_hadamard_test(n, l, phi_i, phi_j, theta, part)
                state = qc.statevector_simulate(circ)
                bias = 2 * qc.qubit_prob0(state, n, n + 1) - 1
                assert bias == pytest.approx(want, abs=1e-10)

    def test_only_rx_gates_promoted_to_controlled(self):
        circ = qc.build_hadamard_test(2, 1, [0.1, 0.2], [0.3, 0.4], np.zeros(3), "imag")
        assert kinds(circ)[0] == qc.H and kinds(circ)[1] == qc.SDG and kinds(circ)[-1] == qc.H
        assert qc.RX not in kinds(circ)
        crx = [g for g in circ.gates if g.kind == qc.CRX]
        assert all(g.qubits[0] == 2 for g in crx)
        assert {g.kind for g in circ.gates} == {qc.H, qc.SDG, qc.CRX, qc.ZZ, qc.RY}


class TestLowDimAnsatz:
    def test_zero_everything_keeps_z_expectation_one(self):
        circ = qc.build_lowdim_ansatz([0.0, 0.0], np.zeros(6))
        state = qc.statevector_simulate(circ)
        assert qc.z_expectation(state, 0, 2) == pytest.approx(1.0, abs=1e-12)

    def test_pi_flip_on_first_qubit(self):
        circ = qc.build_lowdim_ansatz([math.pi, 0.0], np.zeros(6))
        state = qc.statevector_simulate(circ)
        assert qc.z_expectation(state, 0, 2) == pytest.approx(-1.0, abs=1e-12)

    def test_expectation_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            circ = qc.build_lowdim_ansatz(rng.uniform(-1, 1, 2), rng.uniform(-3, 3, 6))
            state = qc.statevector_simulate(circ)
            assert -1.0 - 1e-12 <= qc.z_expectation(state, 0, 2) <= 1.0 + 1e-12


class TestStatevector:
    def test_empty_circuit(self):
        circ = qc.Circuit(3, ())
        np.testing.assert_array_equal(
            qc.statevector_simulate(circ), np.eye(8, dtype=complex)[0]
        )

    def test_hadamard_state(self):
        circ = qc.Circuit(1, (qc.Gate(qc.H, (0,)),))
        np.testing.assert_allclose(
            qc.statevector_simulate(circ), [1 / math.sqrt(2)] * 2, atol=1e-15
        )

    def test_random_circuit_preserves_norm(self):
        rng = np.random.default_rng(8)
        n = 6
        gates = []
        for _ in range(30):
            kind = rng.choice([qc.RX, qc.RY, qc.ZZ, qc.H, qc.SDG, qc.CRX])
            if kind in (qc.ZZ, qc.CRX):
                qubits = tuple(rng.choice(n, size=2, replace=False).tolist())
            else:
                qubits = (int(rng.integers(n)),)
            angle = float(rng.uniform(-math.pi, math.pi)) if kind in qc.PARAMETRIC_KINDS else None
            gates.append(qc.Gate(kind, qubits, angle))
        state = qc.statevector_simulate(qc.Circuit(n, tuple(gates)))
        assert np.linalg.norm(state) == pytest.approx(1.0, abs=1e-12)

    def test_rx_convention_property(self):
        # Rx(a)|0> = (cos(a/2), -i sin(a/2)) under our sign conventions
        rng = np.random.default_rng(9)
        for a in rng.uniform(-2 * math.pi, 2 * math.pi, 100):
            circ = qc.Circuit(1, (qc.Gate(qc.RX, (0,), float(a)),))
            state = qc.statevector_simulate(circ)
            np.testing.assert_allclose(
                state, [math.cos(a / 2), -1j * math.sin(a / 2)], atol=1e-12
            )

    def test_refuses_oversized_circuits(self):
        with pytest.raises(qc.BuildError, match="capped"):
            qc.statevector_simulate(qc.Circuit(21, ()))


class TestGateValidation:
    def test_zz_needs_two_distinct_qubits(self):
        with pytest.raises(qc.BuildError):
            qc.Gate(qc.ZZ, (1, 1), 0.5)

    def test_h_takes_no_parameter(self):
        with pytest.raises(qc.BuildError):
            qc.Gate(qc.H, (0,), 0.5)

    def test_rotation_requires_angle(self):
        with pytest.raises(qc.BuildError):
            qc.Gate(qc.RX, (0,))

    def test_gate_on_out_of_range_qubit(self):
        with pytest.raises(qc.BuildError, match="out-of-range"):
            qc.Circuit(1, (qc.Gate(qc.RX, (1,), 0.1),))

    def test_sdg_has_no_rotation_inverse(self):
        with pytest.raises(qc.BuildError):
            qc.Gate(qc.SDG, (0,)).inverse()


class TestThetaInit:
    def test_zero_range_is_exactly_zero(self):
        np.testing.assert_array_equal(qc.ThetaInit(0.0, 3).sample(7), np.zeros(7))

    def test_uniform_within_range_and_deterministic(self):
        a = qc.ThetaInit(0.5, 3).sample(100)
        b = qc.ThetaInit(0.5, 3).sample(100)
        np.testing.assert_array_equal(a, b)
        assert np.all(a >= 0) and np.all(a < 0.5)

    def test_negative_range_rejected(self):
        with pytest.raises(qc.BuildError):
            qc.ThetaInit(-0.1, 0)


def test_circuit_json_dump_round_structure():
    import json

    circ = qc.build_metric_ansatz(2, 1)
    rows = json.loads(circ.to_json())
    assert len(rows) == len(circ.gates)
    assert rows[0] == {"kind": "rx", "qubits": [0], "slot": {"family": "phi", "index": 0, "sign": 1}}
    bound = circ.bind(phi=[0.1, 0.2], theta=[0.3, 0.4, 0.5])
    rows = json.loads(bound.to_json())
    assert rows[0] == {"kind": "rx", "qubits": [0], "angle": 0.1}
