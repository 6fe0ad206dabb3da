"""Run configuration, the mini-batch training loop and checkpoint persistence."""
from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .circuits import LAYOUTS, CircuitSpec, ConfigError, param_count
from .datasets import RESOLUTIONS, DatasetSlice, class_filter, load_cifar10, load_mnist
from .diffgrad import AdamState, adam_step, batch_loss_and_gradient
from .diffusion import NoiseSchedule, RngStream, make_training_batch
from .encoding import data_qubits_for

FORMAT_VERSION = 1
MAGIC = "EEQDM-CHECKPOINT"
# per-invocation settings kept out of checkpoints; the epoch counter is stored separately
INVOCATION_ONLY = ("epochs", "output_dir")


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class RunConfig:
    model: str = "eeqdm"
    dataset: str = "mnist"
    resolution: int = 8
    depth: int = 10
    timesteps: int = 10
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 0.1
    seed: int = 0
    subset_size: int = 100
    class_filter: Optional[int] = None
    conditional: bool = False
    beta_start: float = 1e-4
    beta_end: float = 0.02
    images_path: str = ""
    labels_path: str = ""
    cifar_paths: str = ""  # comma-separated batch files
    output_dir: str = "."

    def validate(self) -> "RunConfig":
        if self.model not in LAYOUTS:
            raise ConfigError(f"model must be one of {LAYOUTS}")
        if self.dataset not in ("mnist", "cifar10"):
            raise ConfigError("dataset must be mnist or cifar10")
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(f"resolution must be one of {RESOLUTIONS}")
        for name in ("depth", "timesteps", "batch_size", "subset_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.class_filter is not None and not 0 <= self.class_filter <= 9:
            raise ConfigError("class_filter must be a digit 0..9")
        return self

    def circuit_spec(self) -> CircuitSpec:
        return CircuitSpec(
            self.model,
            data_qubits_for(self.resolution * self.resolution),
            self.depth,
            has_time_embedding=True,
            timesteps=self.timesteps,
        )

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(self.timesteps, self.beta_start, self.beta_end)

    def to_items(self) -> list[tuple[str, str]]:
        return [(k, "" if v is None else str(v)) for k, v in asdict(self).items()]

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        """Build from string values (config files, checkpoint headers)."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(kinds[key], raw)
        return cls(**kw)


def _coerce(kind: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if kind == "Optional[int]":
            return None if raw in ("", "none", "None") else int(raw)
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind}") from None
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_dataset(cfg: RunConfig, limit: Optional[int] = None) -> DatasetSlice:
    if cfg.dataset == "mnist":
        for p in (cfg.images_path, cfg.labels_path):
            if not p or not Path(p).is_file():
                raise FileNotFoundError(f"MNIST file not found: {p!r}")
        data = load_mnist(cfg.images_path, cfg.labels_path, cfg.resolution)
    else:
        paths = [p for p in cfg.cifar_paths.split(",") if p]
        if not paths or not all(Path(p).is_file() for p in paths):
            raise FileNotFoundError(f"CIFAR-10 batch file not found: {cfg.cifar_paths!r}")
        data = load_cifar10(paths, cfg.resolution)
    if cfg.class_filter is not None:
        data = class_filter(data, cfg.class_filter)
    limit = cfg.subset_size if limit is None else limit
    data = DatasetSlice(data.images[:limit], data.labels[:limit], data.source, data.resolution)
    if len(data) == 0:
        raise ConfigError("dataset selection is empty")
    return data


@dataclass
class Checkpoint:
    config: RunConfig
    angles: np.ndarray
    adam: AdamState
    epoch: int = 0
    loss_history: list = field(default_factory=list)
    rng_state: Optional[dict] = None

    def spec(self) -> CircuitSpec:
        return self.config.circuit_spec()


def init_checkpoint(cfg: RunConfig) -> tuple[Checkpoint, RngStream]:
    cfg.validate()
    spec = cfg.circuit_spec()
    rng = RngStream(cfg.seed)
    angles = rng.uniform(param_count(spec)) * (2.0 * math.pi)
    ckpt = Checkpoint(cfg, angles, AdamState.zeros(angles.size, cfg.learning_rate))
    ckpt.rng_state = rng.get_state()
    return ckpt, rng


def train_epoch(ckpt: Checkpoint, pixels: np.ndarray, labels: np.ndarray, rng: RngStream) -> float:
    """One shuffled pass of mini-batch Adam; returns the mean per-sample loss seen."""
    cfg = ckpt.config
    spec = ckpt.spec()
    schedule = cfg.schedule()
    order = rng.permutation(len(pixels))
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        ts = rng.integers(1, cfg.timesteps + 1, size=idx.size)
        inputs, targets = make_training_batch(pixels[idx], ts, schedule, rng)
        batch_labels = labels[idx] if cfg.conditional else None
        losses, grads = batch_loss_and_gradient(
            spec, ckpt.angles, inputs, targets, ts, batch_labels
        )
        total += float(np.sum(losses))
        ckpt.adam, ckpt.angles = adam_step(ckpt.adam, ckpt.angles, grads.mean(axis=0))
    ckpt.epoch += 1
    return total / len(order)


def train(
    ckpt: Checkpoint,
    data: DatasetSlice,
    epochs: int,
    rng: Optional[RngStream] = None,
    on_epoch=None,
) -> list[float]:
    """Continue training for ``epochs`` more epochs; returns per-epoch wall seconds."""
    if rng is None:
        rng = RngStream(ckpt.config.seed)
        if ckpt.rng_state is not None:
            rng.set_state(ckpt.rng_state)
    pixels = data.pixel_matrix()
    labels = np.asarray(data.labels)
    walls = []
    for _ in range(epochs):
        tic = time.perf_counter()
        loss = train_epoch(ckpt, pixels, labels, rng)
        walls.append(time.perf_counter() - tic)
        ckpt.loss_history.append(loss)
        ckpt.rng_state = rng.get_state()
        if on_epoch is not None:
            on_epoch(ckpt.epoch, loss, walls[-1])
    return walls


# ---------------------------------------------------------------------------
# checkpoint file: text header, blank line, little-endian float64 block
# ---------------------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    p = ckpt.angles.size
    header = [MAGIC, f"format_version={FORMAT_VERSION}"]
    header += [
        f"config.{k}={v}" for k, v in ckpt.config.to_items() if k not in INVOCATION_ONLY
    ]
    header += [
        f"num_params={p}",
        f"epoch={ckpt.epoch}",
        f"history_length={len(ckpt.loss_history)}",
        f"adam.step={ckpt.adam.step}",
        f"adam.learning_rate={ckpt.adam.learning_rate!r}",
        f"adam.beta1={ckpt.adam.beta1!r}",
        f"adam.beta2={ckpt.adam.beta2!r}",
        f"adam.eps={ckpt.adam.eps!r}",
        f"rng_state={json.dumps(ckpt.rng_state, sort_keys=True)}",
    ]
    block = np.concatenate(
        [ckpt.angles, ckpt.adam.first_moment, ckpt.adam.second_moment, np.asarray(ckpt.loss_history, dtype=np.float64)]
    )
    text = "\n".join(header) + "\n\n"
    Path(path).write_bytes(text.encode("ascii") + block.astype("<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n\n")
    if cut < 0:
        raise CheckpointError("checkpoint header is not terminated")
    try:
        lines = raw[:cut].decode("ascii").split("\n")
    except UnicodeDecodeError:
        raise CheckpointError("checkpoint header is not ASCII") from None
    if lines[0] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    meta = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed header line {line!r}")
        meta[key] = value
    version = meta.get("format_version")
    if version != str(FORMAT_VERSION):
        raise CheckpointError(f"unsupported checkpoint format_version {version!r}")
    try:
        cfg = RunConfig.from_mapping(
            {k[len("config."):]: v for k, v in meta.items() if k.startswith("config.")}
        ).validate()
        p, hist = int(meta["num_params"]), int(meta["history_length"])
        block = raw[cut + 2 :]
        if len(block) != 8 * (3 * p + hist):
            raise CheckpointError(
                f"parameter block holds {len(block)} bytes, expected {8 * (3 * p + hist)}"
            )
        values = np.frombuffer(block, dtype="<f8").astype(np.float64)
        if p != param_count(cfg.circuit_spec()):
            raise CheckpointError(
                f"{p} parameters stored but the configured circuit has {param_count(cfg.circuit_spec())}"
            )
        adam = AdamState(
            values[p : 2 * p].copy(),
            values[2 * p : 3 * p].copy(),
            float(meta["adam.learning_rate"]),
            int(meta["adam.step"]),
            float(meta["adam.beta1"]),
            float(meta["adam.beta2"]),
            float(meta["adam.eps"]),
        )
        rng_state = json.loads(meta["rng_state"])
        return Checkpoint(
            cfg, values[:p].copy(), adam, int(meta["epoch"]), values[3 * p :].tolist(), rng_state
        )
    except (KeyError, ValueError, struct.error) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None


def write_loss_csv(history, path) -> None:
    rows = ["epoch,mean_loss"] + [f"{i},{loss!r}" for i, loss in enumerate(history, 1)]
    Path(path).write_text("\n".join(rows) + "\n", newline="\n")


def write_timing_csv(walls, path, first_epoch: int = 1) -> None:
    rows = ["epoch,wall_seconds"] + [f"{first_epoch + i},{w:.6f}" for i, w in enumerate(walls)]
    Path(path).write_text("\n".join(rows) + "\n", newline="\n")
