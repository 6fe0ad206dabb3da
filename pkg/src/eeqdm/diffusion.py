"""Forward noising, training pairs and reverse sampling.

Two index conventions meet here. The forward chain counts noise up:
``t = 1..T`` with ``t = T`` the noisiest. The sampler counts denoising steps
``s = 1..T`` starting from pure noise. :func:`forward_index` maps one to the
other, and both training and sampling embed the forward index in the circuit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuits import CircuitSpec, ConfigError
from .diffgrad import predict_batch
from .encoding import EncodingError, ImageTensor

MAX_RESAMPLES = 32


class RngStream:
    """Seeded Gaussian source: PCG64 uniforms through an explicit Box-Muller transform.

    PCG64 output is fixed by the seed on every platform, and the Gaussian
    transform is spelled out here rather than left to numpy's sampler.
    """

    algorithm = "pcg64-boxmuller"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size)

    def normal(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(2.0 * np.pi * u2)
        z[1::2] = radius * np.sin(2.0 * np.pi * u2)
        return z[:count].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream; children with distinct keys never share draws."""
        child = np.random.SeedSequence([self.seed, int(key)])
        out = RngStream.__new__(RngStream)
        out.seed = self.seed
        out._gen = np.random.Generator(np.random.PCG64(child))
        return out

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state


@dataclass
class NoiseSchedule:
    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if self.beta.size < 1:
            raise ConfigError("schedule needs at least one timestep")
        if np.any(self.beta < 0) or np.any(self.beta > 1):
            raise ConfigError("beta values must lie in [0, 1]")

    @classmethod
    def linear(cls, timesteps: int = 10, beta_start: float = 1e-4, beta_end: float = 0.02):
        return cls(np.linspace(beta_start, beta_end, timesteps))

    @property
    def T(self) -> int:
        return self.beta.size

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    def check_t(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.T:
            raise ConfigError(f"timestep {t} outside {lo}..{self.T}")

    def alpha_at(self, t: int) -> float:
        self.check_t(t)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product up to ``t``; ``alpha_bar_at(0) == 1``."""
        self.check_t(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def forward_index(step: int, timesteps: int) -> int:
    """Forward-chain timestep whose noise level denoising step ``step`` removes."""
    if not 1 <= step <= timesteps:
        raise ConfigError(f"denoising step {step} outside 1..{timesteps}")
    return timesteps - step + 1


def reverse_step(t: int, timesteps: int) -> int:
    """Inverse of :func:`forward_index`."""
    if not 1 <= t <= timesteps:
        raise ConfigError(f"timestep {t} outside 1..{timesteps}")
    return timesteps - t + 1


def _like(image: ImageTensor, pixels: np.ndarray, norm_scale: float = 1.0) -> ImageTensor:
    return ImageTensor(image.width, image.height, pixels, norm_scale)


def forward_diffuse_step(x: ImageTensor, t: int, schedule: NoiseSchedule, rng: RngStream) -> ImageTensor:
    a = schedule.alpha_at(t)
    eps = rng.normal(x.pixels.size)
    return _like(x, np.sqrt(a) * x.pixels + np.sqrt(1.0 - a) * eps)


def forward_diffuse_to(x0: ImageTensor, t: int, schedule: NoiseSchedule, rng: RngStream) -> ImageTensor:
    ab = schedule.alpha_bar_at(t)
    if t == 0:
        return _like(x0, x0.pixels.copy())
    eps = rng.normal(x0.pixels.size)
    return _like(x0, np.sqrt(ab) * x0.pixels + np.sqrt(1.0 - ab) * eps)


def normalize_nonneg(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp at zero and scale rows to unit L2 norm. Returns (rows, norms); zero rows keep norm 0."""
    clamped = np.maximum(np.asarray(pixels, dtype=np.float64), 0.0)
    norms = np.linalg.norm(clamped, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    return clamped / safe[..., None], norms


def _noised_pair(x0, ab_in, ab_tgt, eps):
    noisy = np.sqrt(ab_in)[:, None] * x0 + np.sqrt(1.0 - ab_in)[:, None] * eps
    prev = np.sqrt(ab_tgt)[:, None] * x0 + np.sqrt(1.0 - ab_tgt)[:, None] * eps
    return normalize_nonneg(noisy), normalize_nonneg(prev)


def make_training_batch(
    x0: np.ndarray, ts, schedule: NoiseSchedule, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized training pairs for rows of ``x0`` at per-row timesteps ``ts``.

    Input is the row noised to ``t``, target the same row noised to ``t - 1``
    with the same Gaussian draw; both clamped and unit-normalized. Rows that
    clamp to all-zero are redrawn.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    ts = np.broadcast_to(np.asarray(ts, dtype=np.int64), x0.shape[:1])
    for t in ts:
        schedule.check_t(int(t))
    ab = np.concatenate([[1.0], schedule.alpha_bar])
    ab_in, ab_tgt = ab[ts], ab[ts - 1]

    eps = rng.normal(x0.shape)
    (inp, n_in), (tgt, n_tgt) = _noised_pair(x0, ab_in, ab_tgt, eps)
    bad = (n_in == 0) | (n_tgt == 0)
    tries = 0
    while np.any(bad):
        if tries == MAX_RESAMPLES:
            raise EncodingError("noised image clamps to zero after repeated redraws")
        rows = np.flatnonzero(bad)
        eps_r = rng.normal((rows.size, x0.shape[1]))
        (i_r, ni), (t_r, nt) = _noised_pair(x0[rows], ab_in[rows], ab_tgt[rows], eps_r)
        inp[rows], tgt[rows] = i_r, t_r
        bad[rows] = (ni == 0) | (nt == 0)
        tries += 1
    return inp, tgt


def make_training_pair(
    x0: ImageTensor, t: int, schedule: NoiseSchedule, rng: RngStream
) -> tuple[ImageTensor, ImageTensor]:
    inp, tgt = make_training_batch(x0.pixels[None], [t], schedule, rng)
    return _like(x0, inp[0]), _like(x0, tgt[0])


def initial_noise(count: int, num_pixels: int, rng: RngStream) -> np.ndarray:
    """Standard-normal rows, clamped and normalized; all-negative rows are redrawn."""
    rows, norms = normalize_nonneg(rng.normal((count, num_pixels)))
    for _ in range(MAX_RESAMPLES):
        bad = np.flatnonzero(norms == 0)
        if bad.size == 0:
            return rows
        rows[bad], norms[bad] = normalize_nonneg(rng.normal((bad.size, num_pixels)))
    raise EncodingError("initial noise clamps to zero after repeated redraws")


def reverse_sample_batch(
    spec: CircuitSpec,
    angles: np.ndarray,
    schedule: NoiseSchedule,
    rng: RngStream,
    count: int,
    shape: tuple[int, int],
    label: Optional[int] = None,
) -> np.ndarray:
    """Trajectories of ``count`` samples, array of shape ``(T + 1, count, width*height)``."""
    if schedule.T != spec.timesteps:
        raise ConfigError(
            f"schedule has {schedule.T} steps but circuit embeds {spec.timesteps}"
        )
    width, height = shape
    frames = [initial_noise(count, width * height, rng)]
    labels = None if label is None else np.full(count, label)
    for step in range(1, schedule.T + 1):
        t = forward_index(step, schedule.T)
        frames.append(predict_batch(spec, angles, frames[-1], t, labels))
    return np.stack(frames)


def reverse_sample(
    spec: CircuitSpec,
    angles: np.ndarray,
    schedule: NoiseSchedule,
    rng: RngStream,
    label: Optional[int] = None,
    shape: tuple[int, int] = (8, 8),
) -> list[ImageTensor]:
    """One generated trajectory ``x_0 .. x_T``; the last frame is the sample."""
    traj = reverse_sample_batch(spec, angles, schedule, rng, 1, shape, label)
    return [ImageTensor(shape[0], shape[1], frame[0]) for frame in traj]
