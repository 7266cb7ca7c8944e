"""Gate set, circuit IR, ansatz builders, and a brute-force statevector oracle.

Gate conventions, fixed once for the whole package:

    Rx(a) = exp(-i a X / 2)      Ry(a) = exp(-i a Y / 2)
    ZZ(a) = exp(-i a Z(x)Z / 2)  H, S-dagger as usual
    CRx(a) = |0><0| (x) I  +  |1><1| (x) Rx(a)

Under these, Rx(a)|0> = (cos(a/2), -i sin(a/2)), so a circuit of stacked Rx
layers applies the sum of the angles. Rotation-like gates invert by negating
the angle, which is what the inversion-test builder relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

RX = "rx"
RY = "ry"
ZZ = "zz"
H = "h"
SDG = "sdg"
CRX = "crx"

PARAMETRIC_KINDS = frozenset({RX, RY, ZZ, CRX})
# Diagonal in the computational basis: these never advance a wire label in the
# tensor network, which is what keeps the contraction width low.
DIAGONAL_KINDS = frozenset({ZZ, SDG})

PHI = "phi"
THETA = "theta"

STATEVECTOR_MAX_QUBITS = 20


class BuildError(ValueError):
    """Raised for structurally invalid circuit constructions."""


class BindingError(ValueError):
    """Raised when parameter vectors do not match a circuit's slots."""


@dataclass(frozen=True)
class ParamRef:
    """Reference to one parameter slot; the gate angle is sign * slot value."""

    family: str  # PHI or THETA
    index: int
    sign: int = 1

    def negated(self):
        return ParamRef(self.family, self.index, -self.sign)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    param: ParamRef | float | None = None

    def __post_init__(self):
        n_q = {RX: 1, RY: 1, H: 1, SDG: 1, ZZ: 2, CRX: 2}.get(self.kind)
        if n_q is None:
            raise BuildError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != n_q:
            raise BuildError(f"{self.kind} acts on {n_q} qubits, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise BuildError(f"{self.kind} qubits must be distinct: {self.qubits}")
        if self.kind in PARAMETRIC_KINDS:
            if self.param is None:
                raise BuildError(f"{self.kind} requires an angle or slot reference")
        elif self.param is not None:
            raise BuildError(f"{self.kind} takes no parameter")

    def angle(self, phi=None, theta=None):
        """Resolve the gate angle against parameter vectors."""
        if self.param is None:
            return 0.0
        if isinstance(self.param, ParamRef):
            source = phi if self.param.family == PHI else theta
            if source is None:
                raise BindingError(f"no {self.param.family} values supplied")
            return self.param.sign * float(source[self.param.index])
        return float(self.param)

    def inverse(self):
        if self.kind == H:
            return self
        if self.kind not in PARAMETRIC_KINDS:
            raise BuildError(f"{self.kind} has no rotation-like inverse")
        param = self.param.negated() if isinstance(self.param, ParamRef) else -self.param
        return Gate(self.kind, self.qubits, param)


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list with counts of bindable parameter slots."""

    n_qubits: int
    gates: tuple[Gate, ...]
    phi_slots: int = 0
    theta_slots: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise BuildError("circuit needs at least one qubit")
        for g in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                raise BuildError(f"gate {g.kind} on out-of-range qubit {g.qubits}")
            if isinstance(g.param, ParamRef):
                limit = self.phi_slots if g.param.family == PHI else self.theta_slots
                if not 0 <= g.param.index < limit:
                    raise BuildError(f"slot {g.param} out of range (limit {limit})")

    def bind(self, phi=None, theta=None):
        """Return a copy with every slot reference replaced by a fixed angle."""
        phi = _check_len(phi, self.phi_slots, "phi")
        theta = _check_len(theta, self.theta_slots, "theta")
        gates = tuple(
            Gate(g.kind, g.qubits, g.angle(phi, theta))
            if isinstance(g.param, ParamRef)
            else g
            for g in self.gates
        )
        return Circuit(self.n_qubits, gates, 0, 0)

    def parametric_gate_positions(self):
        """Positions of gates that carry an angle, in circuit order."""
        return tuple(i for i, g in enumerate(self.gates) if g.kind in PARAMETRIC_KINDS)

    def to_json(self):
        """Debug dump: one {kind, qubits, slot|angle} record per gate."""
        rows = []
        for g in self.gates:
            row = {"kind": g.kind, "qubits": list(g.qubits)}
            if isinstance(g.param, ParamRef):
                row["slot"] = {"family": g.param.family, "index": g.param.index, "sign": g.param.sign}
            elif g.param is not None:
                row["angle"] = float(g.param)
            rows.append(row)
        return json.dumps(rows)


def _check_len(values, expected, name):
    if expected == 0:
        return None
    if values is None or len(values) != expected:
        got = "none" if values is None else len(values)
        raise BindingError(f"{name} needs {expected} values, got {got}")
    return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class ThetaInit:
    """Uniform initializer for circuit-owned parameters; range 0 means all zero."""

    range: float
    seed: int

    def __post_init__(self):
        if self.range < 0:
            raise BuildError("theta range must be >= 0")

    def sample(self, count):
        if self.range == 0.0:
            return np.zeros(count)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(0.0, self.range, count)


# ---------------------------------------------------------------------------
# Ansatz builders
# ---------------------------------------------------------------------------

def _metric_gates(n, l, phi_offset, theta_offset=0):
    """Gate sequence of one encoding circuit: l blocks of
    [Rx(phi) layer, nearest-neighbour ZZ(theta) chain, Ry(theta) layer]
    followed by a final Rx(phi) layer."""
    gates = []
    t = theta_offset
    for _ in range(l):
        for q in range(n):
            gates.append(Gate(RX, (q,), ParamRef(PHI, phi_offset + q)))
        for q in range(n - 1):
            gates.append(Gate(ZZ, (q, q + 1), ParamRef(THETA, t)))
            t += 1
        for q in range(n):
            gates.append(Gate(RY, (q,), ParamRef(THETA, t)))
            t += 1
    for q in range(n):
        gates.append(Gate(RX, (q,), ParamRef(PHI, phi_offset + q)))
    return gates


def metric_theta_count(n, l):
    return l * (2 * n - 1)


def build_metric_ansatz(n, l):
    """Encoding circuit U(phi, theta): n phi slots (each used l+1 times on its
    qubit) and l*(2n-1) theta slots."""
    if n < 1 or l < 1:
        raise BuildError(f"metric ansatz needs n >= 1 and l >= 1, got n={n}, l={l}")
    gates = _metric_gates(n, l, phi_offset=0)
    return Circuit(n, tuple(gates), phi_slots=n, theta_slots=metric_theta_count(n, l))


def inversion_template(n, l):
    """Slot-form inversion-test circuit U-dagger(phi_left) U(phi_right).

    Phi slots: [0, n) bind the right (ket) sample, [n, 2n) the left (bra)
    sample, whose gates carry negated references. Theta slots are shared by
    both halves (positive in U, negated in U-dagger).
    """
    if n < 1 or l < 1:
        raise BuildError(f"inversion test needs n >= 1 and l >= 1, got n={n}, l={l}")
    forward = _metric_gates(n, l, phi_offset=0)
    backward = [g.inverse() for g in reversed(_metric_gates(n, l, phi_offset=n))]
    return Circuit(
        n, tuple(forward + backward), phi_slots=2 * n, theta_slots=metric_theta_count(n, l)
    )


def build_inversion_test(n, l, phi_i, phi_j, theta):
    """Concrete inversion-test circuit for embeddings phi_i (bra) and phi_j (ket)."""
    template = inversion_template(n, l)
    phi_i = _check_len(phi_i, n, "phi_i")
    phi_j = _check_len(phi_j, n, "phi_j")
    return template.bind(phi=np.concatenate([phi_j, phi_i]), theta=theta)


def build_hadamard_test(n, l, phi_i, phi_j, theta, part="real"):
    """Ancilla circuit whose ancilla bias P(0)-P(1) equals Re (or Im) of the
    inversion-test amplitude.

    The ancilla is qubit n. Only the phi-dependent Rx gates are promoted to
    controlled rotations; the theta gates telescope to the identity on the
    ancilla-|0> branch, so they stay uncontrolled.
    """
    if part not in ("real", "imag"):
        raise BuildError(f"part must be 'real' or 'imag', got {part!r}")
    inner = build_inversion_test(n, l, phi_i, phi_j, theta)
    ancilla = n
    gates = [Gate(H, (ancilla,))]
    if part == "imag":
        gates.append(Gate(SDG, (ancilla,)))
    for g in inner.gates:
        if g.kind == RX:
            gates.append(Gate(CRX, (ancilla, g.qubits[0]), g.param))
        else:
            gates.append(g)
    gates.append(Gate(H, (ancilla,)))
    return Circuit(n + 1, tuple(gates), 0, 0)


LOWDIM_QUBITS = 2
LOWDIM_LAYERS = 3
LOWDIM_OMEGA_COUNT = LOWDIM_QUBITS * LOWDIM_LAYERS
LOWDIM_ENTANGLER_ANGLE = math.pi / 2


def build_lowdim_ansatz(x, omega):
    """Two-qubit circuit for the low-dimensional tasks: Rx encoding of the two
    inputs, a fixed ZZ entangler, then three Ry layers with trainable angles,
    each followed by the fixed entangler. Readout is <Z> on qubit 0."""
    x = _check_len(x, LOWDIM_QUBITS, "x")
    omega = _check_len(omega, LOWDIM_OMEGA_COUNT, "omega")
    gates = [
        Gate(RX, (0,), float(x[0])),
        Gate(RX, (1,), float(x[1])),
        Gate(ZZ, (0, 1), LOWDIM_ENTANGLER_ANGLE),
    ]
    for layer in range(LOWDIM_LAYERS):
        gates.append(Gate(RY, (0,), float(omega[2 * layer])))
        gates.append(Gate(RY, (1,), float(omega[2 * layer + 1])))
        gates.append(Gate(ZZ, (0, 1), LOWDIM_ENTANGLER_ANGLE))
    return Circuit(LOWDIM_QUBITS, tuple(gates), 0, 0)


# ---------------------------------------------------------------------------
# Statevector oracle
# ---------------------------------------------------------------------------

def rx_matrix(a):
    c, s = math.cos(a / 2), math.sin(a / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def ry_matrix(a):
    c, s = math.cos(a / 2), math.sin(a / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


H_MATRIX = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
SDG_MATRIX = np.array([[1, 0], [0, -1j]], dtype=np.complex128)


def zz_phases(a):
    """Phase factors of exp(-i a ZZ / 2) indexed by the two qubit values."""
    em, ep = np.exp(-0.5j * a), np.exp(0.5j * a)
    return np.array([[em, ep], [ep, em]], dtype=np.complex128)


def _apply_1q(psi, q, mat):
    psi = np.moveaxis(psi, q, 0)
    psi = np.tensordot(mat, psi, axes=([1], [0]))
    return np.moveaxis(psi, 0, q)


def statevector_simulate(circuit, phi=None, theta=None):
    """Full 2^n statevector of `circuit` applied to |0...0>.

    Qubit 0 is the most significant bit of the basis index. Refuses n > 20.
    """
    n = circuit.n_qubits
    if n > STATEVECTOR_MAX_QUBITS:
        raise BuildError(f"statevector oracle capped at {STATEVECTOR_MAX_QUBITS} qubits, got {n}")
    psi = np.zeros((2,) * n, dtype=np.complex128)
    psi[(0,) * n] = 1.0
    for g in circuit.gates:
        a = g.angle(phi, theta)
        if g.kind == RX:
            psi = _apply_1q(psi, g.qubits[0], rx_matrix(a))
        elif g.kind == RY:
            psi = _apply_1q(psi, g.qubits[0], ry_matrix(a))
        elif g.kind == H:
            psi = _apply_1q(psi, g.qubits[0], H_MATRIX)
        elif g.kind == SDG:
            psi = _apply_1q(psi, g.qubits[0], SDG_MATRIX)
        elif g.kind == ZZ:
            q0, q1 = g.qubits
            ph = zz_phases(a)
            psi = np.moveaxis(psi, (q0, q1), (0, 1))
            psi = psi * ph.reshape((2, 2) + (1,) * (n - 2))
            psi = np.moveaxis(psi, (0, 1), (q0, q1))
        elif g.kind == CRX:
            control, target = g.qubits
            psi = np.moveaxis(psi, (control, target), (0, 1)).copy()
            psi[1] = np.tensordot(rx_matrix(a), psi[1], axes=([1], [0]))
            psi = np.moveaxis(psi, (0, 1), (control, target))
        else:  # pragma: no cover - Gate.__post_init__ rejects unknown kinds
            raise BuildError(f"unsupported gate {g.kind}")
    return psi.reshape(-1)


def amplitude_all_zeros(circuit, phi=None, theta=None):
    """<0...0| circuit |0...0>, the quantity the tensor network reproduces."""
    return statevector_simulate(circuit, phi, theta)[0]


def z_expectation(state, qubit, n_qubits):
    """<Z> on one qubit of a full statevector."""
    probs = np.abs(state.reshape((2,) * n_qubits)) ** 2
    marg = np.moveaxis(probs, qubit, 0).reshape(2, -1).sum(axis=1)
    return float(marg[0] - marg[1])


def qubit_prob0(state, qubit, n_qubits):
    """Probability of measuring |0> on one qubit."""
    probs = np.abs(state.reshape((2,) * n_qubits)) ** 2
    return float(np.moveaxis(probs, qubit, 0)[0].sum())
