"""Hybrid quantum-classical few-shot embedding learning.

A batched tensor-network simulator for shallow parameterized circuits, a
prototypical-network training loop whose distance is quantum state fidelity,
and diagnostics that detect the circuit bypass problem.
"""

from .circuits import (
    Circuit,
    Gate,
    ThetaInit,
    build_hadamard_test,
    build_inversion_test,
    build_lowdim_ansatz,
    build_metric_ansatz,
    inversion_template,
    statevector_simulate,
)
from .kernel import (
    DegenerateEpisodeError,
    InnerProductBatch,
    QuantumHead,
    closed_form_inner,
    hadamard_estimate,
)
from .planner import (
    Bindings,
    ContractionPlan,
    TensorNetwork,
    build_network,
    execute_plan,
    plan_order,
)
from .tensors import Tensor, contract_pair

__all__ = [
    "Bindings",
    "Circuit",
    "ContractionPlan",
    "DegenerateEpisodeError",
    "Gate",
    "InnerProductBatch",
    "QuantumHead",
    "Tensor",
    "TensorNetwork",
    "ThetaInit",
    "build_hadamard_test",
    "build_inversion_test",
    "build_lowdim_ansatz",
    "build_metric_ansatz",
    "build_network",
    "closed_form_inner",
    "contract_pair",
    "execute_plan",
    "hadamard_estimate",
    "inversion_template",
    "plan_order",
    "statevector_simulate",
]

__version__ = "0.1.0"
