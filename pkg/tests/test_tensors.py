import numpy as np
import pytest

from qproto.tensors import ContractError, Tensor, contract, contract_pair

RT2 = 1.0 / np.sqrt(2.0)
H = np.array([[1, 1], [1, -1]], dtype=complex) * RT2


def test_identity_times_basis_vector():
    ident = Tensor((1, 0), np.eye(2, dtype=complex))
    vec = Tensor((0,), np.array([1, 0], dtype=complex))
    out = contract_pair(ident, vec)
    assert out.labels == (1,)
    np.testing.assert_array_equal(out.data, [1, 0])


def test_bra_ket_scalar():
    bra = Tensor((0,), np.array([1, 0], dtype=complex))
    ket = Tensor((0,), np.array([1, 0], dtype=complex))
    out = contract_pair(bra, ket)
    assert out.labels == ()
    assert complex(out.data) == 1.0


def test_hadamard_matches_matrix_vector_oracle():
    gate = Tensor((1, 0), H)
    vec = Tensor((0,), np.array([1, 0], dtype=complex))
    out = contract_pair(gate, vec)
    expected = H @ np.array([1, 0])  # independent dense matmul
    np.testing.assert_allclose(out.data, expected, atol=1e-15)


def test_contract_pair_commutes_up_to_canonical_order():
    rng = np.random.default_rng(0)
    a = Tensor((0, 3), rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    b = Tensor((3, 1), rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    ab = contract_pair(a, b)
    ba = contract_pair(b, a)
    assert ab.labels == ba.labels == (0, 1)
    np.testing.assert_array_equal(ab.data, ba.data)


def test_identity_gate_only_relabels():
    rng = np.random.default_rng(1)
    vec = rng.normal(size=2) + 1j * rng.normal(size=2)
    t = Tensor((0,), vec)
    ident = Tensor((5, 0), np.eye(2, dtype=complex))
    out = contract_pair(t, ident)
    assert out.labels == (5,)
    np.testing.assert_allclose(out.data, vec, atol=1e-15)


def test_ring_network_two_orders_agree():
    rng = np.random.default_rng(2)

    def rand(labels):
        return Tensor(labels, rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))

    t1, t2, t3, t4 = rand((0, 1)), rand((1, 2)), rand((2, 3)), rand((3, 0))
    left = contract_pair(contract_pair(contract_pair(t1, t2), t3), t4)
    right = contract_pair(contract_pair(contract_pair(t3, t4), t1), t2)
    val_l, val_r = complex(left.data), complex(right.data)
    assert abs(val_l - val_r) <= 1e-12 * max(abs(val_l), 1.0)


def test_batched_equals_independent_contractions_exactly():
    rng = np.random.default_rng(3)
    batch = 5
    a_data = rng.normal(size=(batch, 2, 2)) + 1j * rng.normal(size=(batch, 2, 2))
    b_data = rng.normal(size=(batch, 2)) + 1j * rng.normal(size=(batch, 2))
    batched = contract_pair(Tensor((0, 1), a_data, batched=True), Tensor((1,), b_data, batched=True))
    assert batched.batched and batched.labels == (0,)
    for i in range(batch):
        single = contract_pair(Tensor((0, 1), a_data[i]), Tensor((1,), b_data[i]))
        np.testing.assert_array_equal(batched.data[i], single.data)


def test_batch_broadcasts_over_unbatched_operand():
    rng = np.random.default_rng(4)
    mats = rng.normal(size=(3, 2, 2)).astype(complex)
    vec = np.array([1, 0], dtype=complex)
    out = contract_pair(Tensor((1, 0), mats, batched=True), Tensor((0,), vec))
    assert out.batched
    np.testing.assert_array_equal(out.data, mats[:, :, 0])


def test_multiway_contract_keeps_unsummed_shared_label():
    # three tensors share label 0; summing only it multiplies them elementwise
    v = np.array([2.0, 3.0], dtype=complex)
    t = [Tensor((0,), v) for _ in range(3)]
    out = contract(t, {0})
    assert out.labels == ()
    assert complex(out.data) == pytest.approx(2.0 ** 3 + 3.0 ** 3)


def test_dimension_mismatch_rejected():
    a = Tensor((0,), np.zeros(2, dtype=complex))
    b = Tensor((0, 1), np.zeros((3, 2), dtype=complex))
    with pytest.raises(ContractError, match="mismatched dimensions"):
        contract_pair(a, b)


def test_duplicate_labels_rejected():
    with pytest.raises(ContractError, match="duplicate"):
        Tensor((0, 0), np.zeros((2, 2), dtype=complex))


def test_unequal_batch_sizes_rejected():
    a = Tensor((0,), np.zeros((2, 2), dtype=complex), batched=True)
    b = Tensor((0,), np.zeros((3, 2), dtype=complex), batched=True)
    with pytest.raises(ContractError, match="batch sizes differ"):
        contract_pair(a, b)
