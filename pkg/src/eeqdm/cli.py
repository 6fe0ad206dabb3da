"""Command-line entry point: ``eeqdm train | sample | eval | params-compare``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .circuits import EEQDM, QDDM, CircuitSpec, ConfigError, param_count
from .datasets import DatasetSlice, FormatError, class_filter
from .diffusion import RngStream, reverse_sample_batch
from .encoding import EncodingError, ImageTensor
from .metrics import evaluate_pairs
from .qsim import StructureError
from .training import (
    CheckpointError,
    RunConfig,
    init_checkpoint,
    load_checkpoint,
    load_dataset,
    read_config_file,
    save_checkpoint,
    train,
    write_loss_csv,
    write_timing_csv,
)

REPORT_HEADER = ["class", "count", "mse", "ssim", "psnr_db", "frechet"]


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


# ---------------------------------------------------------------------------
# PGM / CSV helpers
# ---------------------------------------------------------------------------

def to_bytes(pixels: np.ndarray) -> bytes:
    """Min-max rescale to 0..255."""
    lo, hi = pixels.min(), pixels.max()
    scaled = (pixels - lo) / (hi - lo) if hi > lo else np.zeros_like(pixels)
    return np.rint(scaled * 255.0).astype(np.uint8).tobytes()


def pgm_bytes(image: ImageTensor) -> bytes:
    return f"P5\n{image.width} {image.height}\n255\n".encode("ascii") + to_bytes(image.pixels)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, resume=None) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if resume:
        ckpt = load_checkpoint(resume)
        rng = None
        epochs = cfg.epochs
        cfg = ckpt.config
    else:
        cfg.validate()
        ckpt, rng = init_checkpoint(cfg)
        epochs = cfg.epochs
    first = ckpt.epoch + 1
    walls = []
    if epochs:
        data = load_dataset(cfg)
        walls = train(
            ckpt, data, epochs, rng,
            on_epoch=lambda e, loss, w: print(f"epoch {e} loss {loss:.6f} ({w:.2f}s)", file=sys.stderr),
        )
    path = out / "checkpoint.eqdm"
    save_checkpoint(ckpt, path)
    write_loss_csv(ckpt.loss_history, out / "loss_history.csv")
    write_timing_csv(walls, out / "timing.csv", first)
    return path


def cmd_sample(checkpoint, count: int, seed: int, out_dir, label=None, trajectory=False) -> list[Path]:
    ckpt = load_checkpoint(checkpoint)
    cfg = ckpt.config
    if count < 0:
        raise ConfigError("count must be >= 0")
    if count == 0:
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = cfg.resolution
    traj = reverse_sample_batch(
        ckpt.spec(), ckpt.angles, cfg.schedule(), RngStream(seed), count, (res, res), label
    )
    written = []
    for i in range(count):
        path = out / f"sample_{i:04d}.pgm"
        path.write_bytes(pgm_bytes(ImageTensor(res, res, traj[-1, i])))
        written.append(path)
        if trajectory:
            for step, frame in enumerate(traj[:, i]):
                (out / f"sample_{i:04d}_step_{step:03d}.pgm").write_bytes(
                    pgm_bytes(ImageTensor(res, res, frame))
                )
    return written


def report_rows(reference: DatasetSlice, generated: DatasetSlice, per_class: bool = True) -> list[list]:
    """Per-class rows (classes present in ``reference``) followed by an ``all`` row."""
    rows = []
    if per_class:
        for digit in range(10):
            ref = class_filter(reference, digit)
            gen = class_filter(generated, digit)
            if len(ref) < 2 or len(gen) < 2:
                continue
            k = min(len(ref), len(gen))
            r = evaluate_pairs(gen.images[:k], ref.images[:k])
            rows.append([digit, k, _fmt(r.mse), _fmt(r.ssim), _fmt(r.psnr_db), _fmt(r.frechet)])
    k = min(len(reference), len(generated))
    r = evaluate_pairs(generated.images[:k], reference.images[:k])
    rows.append(["all", k, _fmt(r.mse), _fmt(r.ssim), _fmt(r.psnr_db), _fmt(r.frechet)])
    return rows


def cmd_eval(checkpoint, data_cfg: RunConfig, per_class_count: int, seed: int, out_path) -> Path:
    """Generate ``per_class_count`` samples per class and score them against held-out images.

    Conditional checkpoints sample with each class label; unconditional ones
    score one shared pool of samples against every class.
    """
    ckpt = load_checkpoint(checkpoint)
    cfg = ckpt.config
    res = cfg.resolution
    reference = load_dataset(data_cfg, limit=10**9)
    if reference.resolution != res:
        raise ConfigError(f"checkpoint resolution {res} but data resolution {reference.resolution}")
    digits = sorted(set(reference.labels)) if data_cfg.class_filter is None else [data_cfg.class_filter]
    rng = RngStream(seed)
    images, labels = [], []
    if not cfg.conditional:
        pool = reverse_sample_batch(ckpt.spec(), ckpt.angles, cfg.schedule(), rng, per_class_count, (res, res))[-1]
    for digit in digits:
        if cfg.conditional:
            pool = reverse_sample_batch(
                ckpt.spec(), ckpt.angles, cfg.schedule(), rng.spawn(digit), per_class_count, (res, res), digit
            )[-1]
        images += [ImageTensor(res, res, row) for row in pool]
        labels += [digit] * per_class_count
    generated = DatasetSlice(images, labels, reference.source, res)
    # unit-norm generated frames against unit-norm references
    ref_norm = DatasetSlice(
        [ImageTensor(res, res, im.pixels / max(np.linalg.norm(im.pixels), 1e-300)) for im in reference.images],
        reference.labels, reference.source, res,
    )
    rows = report_rows(ref_norm, generated, per_class=data_cfg.class_filter is None)
    write_csv(out_path, REPORT_HEADER, rows)
    return Path(out_path)


def params_compare_rows(n_values, depth: int) -> list[list]:
    rows = []
    for n in n_values:
        if n % 2:
            raise ConfigError(f"data qubit count {n} is odd")
        ee = param_count(CircuitSpec(EEQDM, n, depth))
        qd = param_count(CircuitSpec(QDDM, n, depth))
        rows.append([n, depth, ee, qd, f"{100.0 * (1 - ee / qd):.2f}"])
    return rows


def cmd_params_compare(n_values, depth: int, out_path=None) -> list[list]:
    rows = params_compare_rows(n_values, depth)
    header = ["data_qubits", "depth", "eeqdm_params", "qddm_params", "reduction_pct"]
    if out_path:
        write_csv(out_path, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    return rows


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, default=None, action=argparse.BooleanOptionalAction)
        else:
            p.add_argument(flag, dest=f.name, default=None)


def _run_config(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v if isinstance(v, str) else str(v)
    return RunConfig.from_mapping(values)


def _even_range(text: str) -> list[int]:
    """``8-18`` (step 2) or ``8,10,12``."""
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-"))
            return list(range(lo, hi + 1, 2))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot read qubit range {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eeqdm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a circuit and write a checkpoint")
    _add_run_flags(p)
    p.add_argument("--resume", help="continue from this checkpoint for --epochs more epochs")

    p = sub.add_parser("sample", help="generate images from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", type=int)
    p.add_argument("--trajectory", action="store_true", help="also write every denoising frame")
    p.add_argument("--output-dir", default="samples")

    p = sub.add_parser("eval", help="score generated samples against held-out images")
    p.add_argument("--checkpoint", required=True)
    _add_run_flags(p)
    p.add_argument("--samples-per-class", type=int, default=16)
    p.add_argument("--out", default="metrics.csv")

    p = sub.add_parser("params-compare", help="parameter counts of both layouts")
    p.add_argument("--qubits", default="8-18", help="even data-qubit counts, e.g. 8-18 or 8,10")
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "train":
            cfg = _run_config(args)
            path = cmd_train(cfg, resume=args.resume)
            print(path)
        elif args.command == "sample":
            for path in cmd_sample(args.checkpoint, args.count, args.seed, args.output_dir, args.label, args.trajectory):
                print(path)
        elif args.command == "eval":
            cfg = _run_config(args)
            ckpt_cfg = load_checkpoint(args.checkpoint).config
            cfg.resolution = ckpt_cfg.resolution
            seed = cfg.seed
            print(cmd_eval(args.checkpoint, cfg, args.samples_per_class, seed, args.out))
        elif args.command == "params-compare":
            cmd_params_compare(_even_range(args.qubits), args.depth, args.out)
        return 0
    except (
        CliError, ConfigError, CheckpointError, FormatError, EncodingError,
        StructureError, FileNotFoundError, OSError,
    ) as exc:
        reason = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {reason}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
