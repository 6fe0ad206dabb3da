"""Entanglement-enhanced quantum diffusion on a statevector simulator."""
from .circuits import CircuitSpec, build_full_program, param_count
from .diffgrad import AdamState, adam_step, loss_and_gradient
from .diffusion import NoiseSchedule, RngStream, reverse_sample
from .encoding import ImageTensor, amplitude_encode, decode_state
from .qsim import GateOp, StateVector, apply_gate

__all__ = [
    "AdamState",
    "CircuitSpec",
    "GateOp",
    "ImageTensor",
    "NoiseSchedule",
    "RngStream",
    "StateVector",
    "adam_step",
    "amplitude_encode",
    "apply_gate",
    "build_full_program",
    "decode_state",
    "loss_and_gradient",
    "param_count",
    "reverse_sample",
]
