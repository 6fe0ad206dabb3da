"""Statevector simulator over {H, CNOT, RX, RY, RZ}.

Qubit 0 is the least-significant bit of the basis-state index. Gates are applied
as pairwise amplitude updates with stride ``2**target``; a dense matrix is only
ever built by :func:`circuit_unitary_oracle`, which exists for testing.

Amplitude arrays may carry leading batch axes, shape ``(..., 2**num_qubits)``;
every kernel acts on the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

GATE_KINDS = ("H", "CNOT", "RX", "RY", "RZ")
ROTATIONS = ("RX", "RY", "RZ")

ORACLE_MAX_QUBITS = 5

_SQRT_HALF = 1.0 / np.sqrt(2.0)


class StructureError(ValueError):
    """Raised for malformed gates, bad qubit indices or mismatched shapes."""


@dataclass(frozen=True)
class GateOp:
    """One gate of a program.

    Rotations take their angle either from a trainable slot of the parameter
    vector (``angle_slot``) or from a fixed value (``fixed_angle``, used for the
    time and label embeddings).
    """

    kind: str
    target: int
    control: Optional[int] = None
    angle_slot: Optional[int] = None
    fixed_angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise StructureError(f"unknown gate kind {self.kind!r}")
        if self.target < 0 or (self.control is not None and self.control < 0):
            raise StructureError("negative qubit index")
        if self.kind == "CNOT":
            if self.control is None:
                raise StructureError("CNOT needs a control qubit")
            if self.control == self.target:
                raise StructureError("CNOT control equals target")
        elif self.control is not None:
            raise StructureError(f"{self.kind} takes no control qubit")
        if self.kind in ROTATIONS:
            if (self.angle_slot is None) == (self.fixed_angle is None):
                raise StructureError(
                    f"{self.kind} needs exactly one of angle_slot / fixed_angle"
                )
        elif self.angle_slot is not None or self.fixed_angle is not None:
            raise StructureError(f"{self.kind} takes no angle")

    @property
    def trainable(self) -> bool:
        return self.angle_slot is not None

    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise StructureError("num_qubits must be >= 1")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise StructureError(
                f"expected {2**self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


# ---------------------------------------------------------------------------
# 2x2 matrices (entries may be arrays broadcasting over a batch)
# ---------------------------------------------------------------------------

def rotation_matrix(kind: str, theta):
    """Return (m00, m01, m10, m11) for RX/RY/RZ(theta)."""
    half = np.asarray(theta, dtype=np.float64) / 2.0
    c, s = np.cos(half), np.sin(half)
    if kind == "RX":
        return c + 0j, -1j * s, -1j * s, c + 0j
    if kind == "RY":
        return c + 0j, -s + 0j, s + 0j, c + 0j
    if kind == "RZ":
        return np.exp(-1j * half), 0j * c, 0j * c, np.exp(1j * half)
    raise StructureError(f"{kind} is not a rotation")


def rotation_derivative(kind: str, theta):
    """d/dtheta of :func:`rotation_matrix`."""
    half = np.asarray(theta, dtype=np.float64) / 2.0
    c, s = np.cos(half) / 2.0, np.sin(half) / 2.0
    if kind == "RX":
        return -s + 0j, -1j * c, -1j * c, -s + 0j
    if kind == "RY":
        return -s + 0j, -c + 0j, c + 0j, -s + 0j
    if kind == "RZ":
        return -0.5j * np.exp(-1j * half), 0j * c, 0j * c, 0.5j * np.exp(1j * half)
    raise StructureError(f"{kind} is not a rotation")


def _dagger(m):
    m00, m01, m10, m11 = m
    return np.conj(m00), np.conj(m10), np.conj(m01), np.conj(m11)


def _batched(entry):
    # per-sample angle arrays of shape (B,) must broadcast against (B, hi, lo)
    entry = np.asarray(entry)
    if entry.ndim == 0:
        return entry
    return entry.reshape(entry.shape + (1, 1))


# ---------------------------------------------------------------------------
# Kernels on raw amplitude arrays
# ---------------------------------------------------------------------------

def _require_contiguous(amps: np.ndarray) -> None:
    # reshape of a non-contiguous array copies, which would drop the in-place write
    if not amps.flags.c_contiguous:
        raise StructureError("amplitude array must be C-contiguous")


def apply_matrix(amps: np.ndarray, num_qubits: int, target: int, m) -> np.ndarray:
    """Apply a 2x2 matrix on ``target`` in place and return ``amps``."""
    _require_contiguous(amps)
    batch = amps.shape[:-1]
    lo = 1 << target
    view = amps.reshape(batch + ((1 << num_qubits) // (2 * lo), 2, lo))
    a0 = view[..., 0, :].copy()
    a1 = view[..., 1, :]
    m00, m01, m10, m11 = (_batched(e) for e in m)
    view[..., 0, :] = m00 * a0 + m01 * a1
    view[..., 1, :] = m10 * a0 + m11 * a1
    return amps


def apply_hadamard(amps: np.ndarray, num_qubits: int, target: int) -> np.ndarray:
    _require_contiguous(amps)
    batch = amps.shape[:-1]
    lo = 1 << target
    view = amps.reshape(batch + ((1 << num_qubits) // (2 * lo), 2, lo))
    a0 = view[..., 0, :].copy()
    a1 = view[..., 1, :]
    view[..., 0, :] = (a0 + a1) * _SQRT_HALF
    view[..., 1, :] = (a0 - a1) * _SQRT_HALF
    return amps


@lru_cache(maxsize=None)
def _cnot_swap_indices(num_qubits: int, control: int, target: int):
    idx = np.arange(1 << num_qubits)
    lo = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    return lo, lo | (1 << target)


def apply_cnot(amps: np.ndarray, num_qubits: int, control: int, target: int) -> np.ndarray:
    lo, hi = _cnot_swap_indices(num_qubits, control, target)
    tmp = amps[..., lo]
    amps[..., lo] = amps[..., hi]
    amps[..., hi] = tmp
    return amps


def gate_angle(gate: GateOp, angles: Optional[np.ndarray]):
    if gate.fixed_angle is not None:
        return gate.fixed_angle
    if angles is None or gate.angle_slot >= len(angles):
        raise StructureError(f"angle slot {gate.angle_slot} beyond parameter vector")
    return angles[gate.angle_slot]


def check_gate(gate: GateOp, num_qubits: int) -> None:
    for q in gate.qubits():
        if q >= num_qubits:
            raise StructureError(f"qubit {q} out of range for {num_qubits}-qubit register")


def apply_gate_inplace(
    amps: np.ndarray,
    num_qubits: int,
    gate: GateOp,
    angles: Optional[np.ndarray] = None,
    *,
    adjoint: bool = False,
) -> np.ndarray:
    """Apply ``gate`` (or its inverse) to a raw amplitude array in place."""
    if gate.kind == "H":
        return apply_hadamard(amps, num_qubits, gate.target)
    if gate.kind == "CNOT":
        return apply_cnot(amps, num_qubits, gate.control, gate.target)
    m = rotation_matrix(gate.kind, gate_angle(gate, angles))
    if adjoint:
        m = _dagger(m)
    return apply_matrix(amps, num_qubits, gate.target, m)


def run_program(
    amps: np.ndarray, num_qubits: int, gates: Sequence[GateOp], angles=None
) -> np.ndarray:
    for gate in gates:
        apply_gate_inplace(amps, num_qubits, gate, angles)
    return amps


def apply_gate(state: StateVector, gate: GateOp, angles=None) -> StateVector:
    """Return a new state with ``gate`` applied."""
    check_gate(gate, state.num_qubits)
    out = state.amplitudes.copy()
    apply_gate_inplace(out, state.num_qubits, gate, angles)
    return StateVector(state.num_qubits, out)


def apply_gates(state: StateVector, gates: Sequence[GateOp], angles=None) -> StateVector:
    for gate in gates:
        check_gate(gate, state.num_qubits)
    out = state.amplitudes.copy()
    run_program(out, state.num_qubits, gates, angles)
    return StateVector(state.num_qubits, out)


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

def marginal_probabilities(state: StateVector, keep_qubits: Sequence[int]) -> np.ndarray:
    """Probabilities of the kept qubits with the rest traced out.

    Entry ``k`` of the result corresponds to ``keep_qubits[j]`` holding bit ``j``
    of ``k`` (first kept qubit is least significant).
    """
    keep = list(keep_qubits)
    if len(set(keep)) != len(keep):
        raise StructureError("duplicate qubit in keep_qubits")
    n = state.num_qubits
    for q in keep:
        if not 0 <= q < n:
            raise StructureError(f"qubit {q} out of range")
    probs = np.abs(state.amplitudes) ** 2
    # axis a of the reshaped tensor is qubit n-1-a
    tensor = probs.reshape((2,) * n)
    traced = tuple(n - 1 - q for q in range(n) if q not in keep)
    reduced = tensor.sum(axis=traced) if traced else tensor
    # remaining axes are kept qubits in descending order; reorder to reversed(keep)
    remaining = sorted(keep, reverse=True)
    order = [remaining.index(q) for q in reversed(keep)]
    return np.transpose(reduced, order).reshape(-1) if keep else reduced.reshape(1)


# ---------------------------------------------------------------------------
# Dense oracle
# ---------------------------------------------------------------------------

def _embed_single(m: np.ndarray, target: int, num_qubits: int) -> np.ndarray:
    out = np.eye(1, dtype=np.complex128)
    for q in reversed(range(num_qubits)):
        out = np.kron(out, m if q == target else np.eye(2))
    return out


def _dense_gate(gate: GateOp, angles, num_qubits: int) -> np.ndarray:
    if gate.kind == "H":
        return _embed_single(np.array([[1, 1], [1, -1]]) * _SQRT_HALF, gate.target, num_qubits)
    if gate.kind == "CNOT":
        p0 = np.diag([1.0, 0.0]).astype(np.complex128)
        p1 = np.diag([0.0, 1.0]).astype(np.complex128)
        x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
        ops0 = [np.eye(2)] * num_qubits
        ops1 = [np.eye(2)] * num_qubits
        ops0[gate.control] = p0
        ops1[gate.control] = p1
        ops1[gate.target] = x
        total = np.zeros((2**num_qubits,) * 2, dtype=np.complex128)
        for ops in (ops0, ops1):
            term = np.eye(1, dtype=np.complex128)
            for q in reversed(range(num_qubits)):
                term = np.kron(term, ops[q])
            total += term
        return total
    m00, m01, m10, m11 = rotation_matrix(gate.kind, gate_angle(gate, angles))
    return _embed_single(np.array([[m00, m01], [m10, m11]]), gate.target, num_qubits)


def circuit_unitary_oracle(gates: Sequence[GateOp], angles, num_qubits: int) -> np.ndarray:
    """Dense unitary of a gate list via Kronecker expansion (testing only)."""
    if num_qubits > ORACLE_MAX_QUBITS:
        raise StructureError(
            f"dense oracle refuses {num_qubits} qubits (limit {ORACLE_MAX_QUBITS})"
        )
    u = np.eye(2**num_qubits, dtype=np.complex128)
    for gate in gates:
        check_gate(gate, num_qubits)
        u = _dense_gate(gate, angles, num_qubits) @ u
    return u
