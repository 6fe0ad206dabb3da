"""Gate programs for the entanglement-enhanced layout and the full-register baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .qsim import GateOp

EEQDM = "eeqdm"
QDDM = "qddm"
LAYOUTS = (EEQDM, QDDM)


class ConfigError(ValueError):
    """Raised for invalid circuit or run configuration."""


@dataclass(frozen=True)
class CircuitSpec:
    layout: str
    data_qubits: int
    depth: int
    has_time_embedding: bool = True
    timesteps: int = 10
    num_classes: int = 10

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.data_qubits < 2 or self.data_qubits % 2:
            raise ConfigError(f"data_qubits must be even and >= 2, got {self.data_qubits}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.timesteps < 1:
            raise ConfigError("timesteps must be >= 1")

    @property
    def ancilla(self) -> int:
        return self.data_qubits

    @property
    def total_qubits(self) -> int:
        return self.data_qubits + 1

    def acted_qubits(self) -> list[int]:
        """Qubits the trainable layers touch, ancilla last."""
        if self.layout == EEQDM:
            return list(range(self.data_qubits // 2)) + [self.ancilla]
        return list(range(self.data_qubits)) + [self.ancilla]


def param_count(spec: CircuitSpec) -> int:
    return 3 * spec.depth * len(spec.acted_qubits())


def reduction(data_qubits: int, depth: int = 1) -> float:
    """Fractional parameter saving of the entangled layout over the baseline."""
    ee = param_count(CircuitSpec(EEQDM, data_qubits, depth))
    qd = param_count(CircuitSpec(QDDM, data_qubits, depth))
    return 1.0 - ee / qd


def build_entanglement_stage(spec: CircuitSpec) -> list[GateOp]:
    if spec.layout != EEQDM:
        raise ConfigError("the Bell-pair stage belongs to the eeqdm layout only")
    half = spec.data_qubits // 2
    gates = [GateOp("H", q) for q in range(half)]
    gates += [GateOp("CNOT", q + half, control=q) for q in range(half)]
    return gates


def build_pqc_stage(spec: CircuitSpec) -> list[GateOp]:
    acted = spec.acted_qubits()
    width = len(acted)
    gates = []
    slot = 0
    for _ in range(spec.depth):
        for q in acted:
            gates.append(GateOp("RZ", q, angle_slot=slot))
            gates.append(GateOp("RY", q, angle_slot=slot + 1))
            gates.append(GateOp("RZ", q, angle_slot=slot + 2))
            slot += 3
        for j in range(width):
            gates.append(GateOp("CNOT", acted[(j + 1) % width], control=acted[j]))
    return gates


def time_angle(t: int, timesteps: int) -> float:
    return math.pi * t / timesteps


def label_angle(label: int, num_classes: int) -> float:
    return 2.0 * math.pi * label / num_classes


def build_embedding(spec: CircuitSpec, t: int, label: Optional[int] = None) -> list[GateOp]:
    if not 1 <= t <= spec.timesteps:
        raise ConfigError(f"timestep {t} outside 1..{spec.timesteps}")
    gates = []
    if spec.has_time_embedding:
        gates.append(GateOp("RY", spec.ancilla, fixed_angle=time_angle(t, spec.timesteps)))
    if label is not None:
        if not 0 <= label < spec.num_classes:
            raise ConfigError(f"label {label} outside 0..{spec.num_classes - 1}")
        gates.append(GateOp("RY", spec.ancilla, fixed_angle=label_angle(label, spec.num_classes)))
    return gates


def build_body(spec: CircuitSpec) -> list[GateOp]:
    """The timestep-independent part: Bell pairs (eeqdm only) then trainable layers."""
    gates = build_entanglement_stage(spec) if spec.layout == EEQDM else []
    return gates + build_pqc_stage(spec)


def build_full_program(spec: CircuitSpec, t: int, label: Optional[int] = None) -> list[GateOp]:
    return build_embedding(spec, t, label) + build_body(spec)
