"""Amplitude encoding of pixel vectors and sqrt-probability decoding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qsim import StateVector, StructureError


class EncodingError(ValueError):
    """Raised when a pixel vector cannot be amplitude-encoded."""


@dataclass
class ImageTensor:
    """Single-channel image, row-major pixels.

    ``norm_scale`` is the L2 norm that was divided out when the image was
    normalized for encoding; 1.0 for images that were never normalized.
    """

    width: int
    height: int
    pixels: np.ndarray
    norm_scale: float = 1.0
    channels: int = field(default=1, repr=False)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1)
        if self.channels != 1:
            raise StructureError("only single-channel images are supported")
        if self.pixels.size != self.width * self.height:
            raise StructureError(
                f"{self.width}x{self.height} image needs {self.width * self.height} pixels, "
                f"got {self.pixels.size}"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise StructureError("non-finite pixel value")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)

    def as_array(self) -> np.ndarray:
        """Pixels as a (height, width) array."""
        return self.pixels.reshape(self.height, self.width)


def data_qubits_for(num_pixels: int) -> int:
    if num_pixels < 1:
        raise StructureError("image has no pixels")
    return max(1, math.ceil(math.log2(num_pixels)))


def encode_pixels(pixels: np.ndarray, total_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched amplitude encoding of rows of ``pixels``.

    Returns ``(amplitudes, norms)`` with amplitudes of shape ``(..., 2**total_qubits)``;
    the ancilla (highest qubit) is left in |0>.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    capacity = 1 << (total_qubits - 1)
    n = pixels.shape[-1]
    if n > capacity:
        raise EncodingError(f"{n} pixels exceed {total_qubits - 1} data qubits")
    if np.any(pixels < 0):
        raise EncodingError("amplitude encoding expects nonnegative pixels")
    norms = np.linalg.norm(pixels, axis=-1)
    if np.any(norms == 0):
        raise EncodingError("cannot encode an all-zero image")
    amps = np.zeros(pixels.shape[:-1] + (2 * capacity,), dtype=np.complex128)
    amps[..., :n] = pixels / norms[..., None]
    return amps, norms


def amplitude_encode(image: ImageTensor, total_qubits: int) -> tuple[StateVector, float]:
    """Encode ``image`` onto ``total_qubits - 1`` data qubits plus an ancilla.

    Returns the state and the norm that was divided out.
    """
    amps, norm = encode_pixels(image.pixels, total_qubits)
    return StateVector(total_qubits, amps), float(norm)


def encode_image(image: ImageTensor) -> tuple[StateVector, float]:
    return amplitude_encode(image, data_qubits_for(image.pixels.size) + 1)


def decode_amplitudes(amps: np.ndarray, num_pixels: int) -> np.ndarray:
    """sqrt of the data-register marginal, ancilla traced out, first ``num_pixels`` entries."""
    half = amps.shape[-1] // 2
    probs = np.abs(amps[..., :half]) ** 2 + np.abs(amps[..., half:]) ** 2
    if num_pixels > half:
        raise StructureError(f"state has only {half} data basis states")
    return np.sqrt(probs[..., :num_pixels])


def decode_state(state: StateVector, image_shape: tuple[int, int]) -> ImageTensor:
    width, height = image_shape
    return ImageTensor(width, height, decode_amplitudes(state.amplitudes, width * height))


LUMA = np.array([0.299, 0.587, 0.114])


def grayscale_convert(rgb_pixels, width: int | None = None, height: int | None = None) -> ImageTensor:
    """Luma of an (N, 3) byte array, scaled to [0, 1].

    Without explicit dimensions the result is an N x 1 image.
    """
    rgb = np.asarray(rgb_pixels, dtype=np.float64).reshape(-1, 3)
    if rgb.shape[0] == 0:
        raise StructureError("empty pixel array")
    luma = rgb @ LUMA / 255.0
    if width is None:
        width, height = luma.size, 1
    return ImageTensor(width, height, luma)
