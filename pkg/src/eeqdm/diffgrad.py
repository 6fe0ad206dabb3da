"""Exact reverse-pass gradients of the pixel MSE, and Adam."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qsim
from .circuits import CircuitSpec, build_body, label_angle, param_count, time_angle
from .encoding import ImageTensor, decode_amplitudes, encode_pixels
from .qsim import StructureError

# floor inside d sqrt(p)/dp, which diverges at p = 0
SQRT_FLOOR = 1e-12


def _embed(spec: CircuitSpec, amps: np.ndarray, ts: np.ndarray, labels) -> None:
    n = spec.total_qubits
    if spec.has_time_embedding:
        angle = time_angle(ts, spec.timesteps)
        qsim.apply_matrix(amps, n, spec.ancilla, qsim.rotation_matrix("RY", angle))
    if labels is not None:
        angle = label_angle(np.asarray(labels, dtype=np.float64), spec.num_classes)
        qsim.apply_matrix(amps, n, spec.ancilla, qsim.rotation_matrix("RY", angle))


def _check_timesteps(spec: CircuitSpec, ts: np.ndarray) -> None:
    if np.any(ts < 1) or np.any(ts > spec.timesteps):
        raise StructureError(f"timesteps must lie in 1..{spec.timesteps}")


def forward_batch(
    spec: CircuitSpec,
    angles: np.ndarray,
    inputs: np.ndarray,
    ts,
    labels=None,
    body: Optional[Sequence[qsim.GateOp]] = None,
) -> np.ndarray:
    """Run the circuit on a batch of pixel rows; returns final amplitudes ``(B, 2**(n+1))``."""
    inputs = np.atleast_2d(inputs)
    ts = np.broadcast_to(np.asarray(ts, dtype=np.float64), inputs.shape[:1])
    _check_timesteps(spec, ts)
    amps, _ = encode_pixels(inputs, spec.total_qubits)
    _embed(spec, amps, ts, labels)
    gates = build_body(spec) if body is None else body
    return qsim.run_program(amps, spec.total_qubits, gates, angles)


def predict_batch(spec, angles, inputs, ts, labels=None, body=None) -> np.ndarray:
    """Decoded circuit outputs, one pixel row per input row."""
    inputs = np.atleast_2d(inputs)
    amps = forward_batch(spec, angles, inputs, ts, labels, body)
    return decode_amplitudes(amps, inputs.shape[-1])


def program_loss_and_gradient(
    amps: np.ndarray,
    num_qubits: int,
    gates: Sequence[qsim.GateOp],
    angles: np.ndarray,
    targets: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pixel MSE of the decoded output of ``gates`` applied to prepared states ``amps``.

    ``amps`` has shape ``(B, 2**num_qubits)`` and is consumed. The highest qubit
    is the ancilla that decoding traces out. Returns per-sample losses ``(B,)``
    and gradients ``(B, len(angles))`` from one forward sweep and one reverse
    sweep that un-applies each gate to both the state and the adjoint vector.
    """
    targets = np.atleast_2d(targets)
    num_pixels = targets.shape[-1]
    psi = qsim.run_program(amps, num_qubits, gates, angles)
    out = decode_amplitudes(psi, num_pixels)
    resid = out - targets
    losses = np.mean(resid**2, axis=-1)

    # dL/dp per data basis state; zero for padded states beyond the image
    half = psi.shape[-1] // 2
    dl_dp = np.zeros(psi.shape[:-1] + (half,))
    dl_dp[..., :num_pixels] = resid / (num_pixels * np.sqrt(out**2 + SQRT_FLOOR))
    lam = psi * np.concatenate([dl_dp, dl_dp], axis=-1)

    grads = np.zeros((psi.shape[0], len(angles)))
    for gate in reversed(gates):
        qsim.apply_gate_inplace(psi, num_qubits, gate, angles, adjoint=True)
        if gate.trainable:
            theta = angles[gate.angle_slot]
            dpsi = qsim.apply_matrix(
                psi.copy(), num_qubits, gate.target, qsim.rotation_derivative(gate.kind, theta)
            )
            grads[:, gate.angle_slot] = 2.0 * np.sum(np.conj(lam) * dpsi, axis=-1).real
        qsim.apply_gate_inplace(lam, num_qubits, gate, angles, adjoint=True)
    return losses, grads


def batch_loss_and_gradient(
    spec: CircuitSpec,
    angles: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    ts,
    labels=None,
    body: Optional[Sequence[qsim.GateOp]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses ``(B,)`` and gradients ``(B, P)`` for a batch of training pairs."""
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (param_count(spec),):
        raise StructureError(
            f"expected {param_count(spec)} angles, got shape {angles.shape}"
        )
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if inputs.shape != targets.shape:
        raise StructureError("input and target shapes differ")
    ts = np.broadcast_to(np.asarray(ts, dtype=np.float64), inputs.shape[:1])
    _check_timesteps(spec, ts)
    amps, _ = encode_pixels(inputs, spec.total_qubits)
    _embed(spec, amps, ts, labels)
    gates = build_body(spec) if body is None else body
    return program_loss_and_gradient(amps, spec.total_qubits, gates, angles, targets)


def loss_and_gradient(
    spec: CircuitSpec,
    angles: np.ndarray,
    input: ImageTensor,
    target: ImageTensor,
    t: int,
    label: Optional[int] = None,
) -> tuple[float, np.ndarray]:
    if input.shape != target.shape:
        raise StructureError("input and target shapes differ")
    labels = None if label is None else [label]
    losses, grads = batch_loss_and_gradient(
        spec, angles, input.pixels[None], target.pixels[None], [t], labels
    )
    return float(losses[0]), grads[0]


def loss_only(spec, angles, inputs, targets, ts, labels=None) -> np.ndarray:
    out = predict_batch(spec, angles, inputs, ts, labels)
    return np.mean((out - np.atleast_2d(targets)) ** 2, axis=-1)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 0.1
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, learning_rate: float = 0.1, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), learning_rate, **kw)


def adam_step(
    state: AdamState, angles: np.ndarray, grad: np.ndarray
) -> tuple[AdamState, np.ndarray]:
    angles = np.asarray(angles, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (angles.shape == grad.shape == state.first_moment.shape):
        raise StructureError(
            f"length mismatch: angles {angles.shape}, grad {grad.shape}, "
            f"moments {state.first_moment.shape}"
        )
    step = state.step + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new_angles = angles - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(
        m, v, state.learning_rate, step, state.beta1, state.beta2, state.eps
    )
    return new_state, new_angles
