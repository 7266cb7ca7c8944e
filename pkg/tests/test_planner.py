import json
import math

import numpy as np
import pytest

from qproto import circuits as qc
from qproto import planner as qp


def rx_chain(depth, angle=0.3):
    return qc.Circuit(1, tuple(qc.Gate(qc.RX, (0,), angle) for _ in range(depth)))


class TestBuildNetwork:
    def test_single_gate_counts(self):
        net = qp.build_network(rx_chain(1))
        assert len(net.stubs) == 3  # cap, gate, cap
        assert net.n_labels == 2
        assert net.open_labels == ()

    def test_diagonal_zz_is_one_tensor_touching_both_wires(self):
        circ = qc.Circuit(
            2, (qc.Gate(qc.RX, (0,), 0.1), qc.Gate(qc.RX, (1,), 0.2), qc.Gate(qc.ZZ, (0, 1), 0.3))
        )
        net = qp.build_network(circ)
        # per qubit: in-cap, Rx, out-cap rows, plus one shared diagonal ZZ
        assert len(net.stubs) == 7
        assert net.n_labels == 4
        zz = [s for s in net.stubs if s.kind == qc.ZZ]
        assert len(zz) == 1 and len(zz[0].labels) == 2

    def test_inversion_test_label_count_matches_hand_count(self):
        # per wire: caps plus 2(l+1) Rx and 2l Ry advance the label, so
        # 4l + 3 segments per qubit; diagonal ZZ gates add none.
        for n, l in ((4, 1), (3, 2)):
            template = qc.inversion_template(n, l)
            net = qp.build_network(template)
            assert net.n_labels == n * (4 * l + 3)

    def test_every_label_held_by_at_least_two_tensors(self):
        net = qp.build_network(qc.inversion_template(3, 1))
        holders = {}
        for stub in net.stubs:
            for lab in stub.labels:
                holders[lab] = holders.get(lab, 0) + 1
        assert min(holders.values()) >= 2


class TestPlanOrder:
    @pytest.mark.parametrize("heuristic", qp.HEURISTICS)
    @pytest.mark.parametrize("depth", [1, 2, 5])
    def test_chain_has_width_one(self, heuristic, depth):
        plan = qp.plan_order(qp.build_network(rx_chain(depth)), heuristic)
        assert plan.width == 1

    def test_product_circuit_width_one(self):
        gates = tuple(qc.Gate(qc.RX, (q,), 0.4) for q in range(3) for _ in range(2))
        plan = qp.plan_order(qp.build_network(qc.Circuit(3, gates)))
        assert plan.width == 1

    @pytest.mark.parametrize(
        "circuit",
        [
            qc.inversion_template(1, 1),
            qc.inversion_template(1, 2),
            qc.inversion_template(2, 1),
            qc.build_metric_ansatz(2, 1),
            qc.build_metric_ansatz(3, 1),
            qc.build_metric_ansatz(2, 2),
        ],
        ids=["inv-1-1", "inv-1-2", "inv-2-1", "ansatz-2-1", "ansatz-3-1", "ansatz-2-2"],
    )
    def test_greedy_matches_exhaustive_width(self, circuit):
        net = qp.build_network(circuit)
        assert net.n_labels <= 16
        greedy = qp.plan_order(net, "greedy_min_fill")
        exact = qp.plan_order(net, "exhaustive")
        assert greedy.width == exact.width

    def test_exhaustive_refuses_large_networks(self):
        net = qp.build_network(qc.inversion_template(4, 1))
        with pytest.raises(qp.PlanError, match="capped"):
            qp.plan_order(net, "exhaustive")

    def test_unknown_heuristic_rejected(self):
        net = qp.build_network(rx_chain(1))
        with pytest.raises(qp.PlanError, match="unknown heuristic"):
            qp.plan_order(net, "magic")

    def test_plan_is_deterministic(self):
        net = qp.build_network(qc.inversion_template(3, 2))
        a = qp.plan_order(net)
        b = qp.plan_order(net)
        assert a.order == b.order and a.steps == b.steps

    def test_width_cap_refusal(self, monkeypatch):
        monkeypatch.setattr(qp, "MAX_WIDTH", 1)
        net = qp.build_network(qc.inversion_template(2, 1))
        with pytest.raises(qp.PlanError, match="refusing"):
            qp.plan_order(net)

    def test_width_constant_in_n_for_fixed_l(self):
        widths = {l: set() for l in (1, 2)}
        for l in (1, 2):
            for n in (8, 16, 32, 64):
                plan = qp.plan_order(qp.build_network(qc.inversion_template(n, l)))
                widths[l].add(plan.width)
        assert len(widths[1]) == 1 and len(widths[2]) == 1
        assert max(widths[1]) < max(widths[2])  # width grows with l


class TestExecutePlan:
    def test_empty_circuit_amplitude_one(self):
        for n in (1, 3, 6):
            amp = qp.amplitude(qc.Circuit(n, ()))
            assert amp == 1.0 + 0.0j

    def test_rx_pi_amplitude_zero_vs_statevector(self):
        circ = qc.Circuit(1, (qc.Gate(qc.RX, (0,), math.pi),))
        amp = qp.amplitude(circ)
        oracle = qc.amplitude_all_zeros(circ)
        assert amp == pytest.approx(oracle, abs=1e-15)
        assert abs(amp) < 1e-12

    def test_batch_equals_single_executions_exactly(self):
        rng = np.random.default_rng(10)
        template = qc.inversion_template(2, 1)
        plan = qp.plan_order(qp.build_network(template))
        phi = rng.uniform(-math.pi, math.pi, (8, 4))
        theta = rng.uniform(0, 2 * math.pi, (8, 3))
        batch = qp.execute_plan(plan, qp.Bindings(phi=phi, theta=theta))
        singles = np.array([
            qp.execute_plan(plan, qp.Bindings(phi=phi[i:i + 1], theta=theta[i:i + 1]))[0]
            for i in range(8)
        ])
        np.testing.assert_array_equal(batch, singles)

    def test_plan_reused_across_many_bindings(self):
        template = qc.inversion_template(1, 1)
        plan = qp.plan_order(qp.build_network(template))
        rng = np.random.default_rng(11)
        before = qp.plan_call_count()
        for _ in range(1000):
            qp.execute_plan(
                plan, qp.Bindings(phi=rng.uniform(size=(1, 2)), theta=rng.uniform(size=(1, 1)))
            )
        assert qp.plan_call_count() == before

    def test_missing_binding_is_an_error(self):
        plan = qp.plan_order(qp.build_network(qc.inversion_template(1, 1)))
        with pytest.raises(qp.ExecutionError, match="bindings"):
            qp.execute_plan(plan)
        with pytest.raises(qp.ExecutionError, match="theta"):
            qp.execute_plan(plan, qp.Bindings(phi=np.zeros((1, 2))))

    def test_peak_rank_within_plan_width(self):
        rng = np.random.default_rng(12)
        net = qp.build_network(qc.inversion_template(3, 2))
        plan = qp.plan_order(net)
        stats = {}
        qp.execute_plan(
            plan,
            qp.Bindings(
                phi=rng.uniform(size=(2, 6)),
                theta=rng.uniform(size=(2, qc.metric_theta_count(3, 2))),
            ),
            stats=stats,
        )
        assert stats["peak_rank"] <= plan.width

    def test_random_shallow_circuits_match_statevector(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            n = int(rng.integers(1, 11))
            gates = []
            for _ in range(int(rng.integers(1, 3 * n + 1))):
                kind = rng.choice([qc.RX, qc.RY, qc.ZZ, qc.H, qc.SDG, qc.CRX])
                if kind in (qc.ZZ, qc.CRX) and n == 1:
                    kind = qc.RX
                if kind in (qc.ZZ, qc.CRX):
                    a, b = rng.choice(n, size=2, replace=False)
                    qubits = (int(a), int(b))
                else:
                    qubits = (int(rng.integers(n)),)
                angle = float(rng.uniform(-math.pi, math.pi)) if kind in qc.PARAMETRIC_KINDS else None
                gates.append(qc.Gate(kind, qubits, angle))
            circ = qc.Circuit(n, tuple(gates))
            assert qp.amplitude(circ) == pytest.approx(
                qc.amplitude_all_zeros(circ), abs=1e-10
            )


class TestPlanDump:
    def test_json_round_trip(self):
        net = qp.build_network(qc.inversion_template(2, 1))
        plan = qp.plan_order(net)
        blob = json.loads(plan.to_json())
        assert set(blob) == {"order", "width", "schedule"}
        restored = qp.plan_from_json(net, plan.to_json())
        assert restored.order == plan.order
        assert restored.width == plan.width
        assert restored.steps == plan.steps

    def test_tampered_dump_rejected(self):
        net = qp.build_network(qc.inversion_template(2, 1))
        plan = qp.plan_order(net)
        blob = json.loads(plan.to_json())
        blob["width"] += 1
        with pytest.raises(qp.PlanError, match="width"):
            qp.plan_from_json(net, json.dumps(blob))
        blob = json.loads(plan.to_json())
        blob["order"] = blob["order"][:-1]
        with pytest.raises(qp.PlanError, match="permutation"):
            qp.plan_from_json(net, json.dumps(blob))
