from pathlib import Path

import numpy as np
import pytest

from eeqdm.qsim import GateOp

DATA = Path(__file__).parent / "data"
MNIST_IMAGES = DATA / "mnist-subset-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist-subset-labels-idx1-ubyte.gz"


def random_circuit(rng, num_qubits, depth, num_slots=None):
    """Random program over all gate kinds; rotation gates get consecutive slots."""
    gates, slot = [], 0
    for _ in range(depth):
        for q in range(num_qubits):
            kind = rng.choice(["H", "RX", "RY", "RZ"])
            if kind == "H":
                gates.append(GateOp("H", q))
            else:
                gates.append(GateOp(str(kind), q, angle_slot=slot))
                slot += 1
        if num_qubits > 1:
            c, t = rng.choice(num_qubits, size=2, replace=False)
            gates.append(GateOp("CNOT", int(t), control=int(c)))
    return gates, slot


def random_state(rng, num_qubits):
    v = rng.normal(size=2**num_qubits) + 1j * rng.normal(size=2**num_qubits)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def mnist_paths():
    return MNIST_IMAGES, MNIST_LABELS


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
