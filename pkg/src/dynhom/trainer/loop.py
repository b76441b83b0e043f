"""The training loop: phase plan, seeded shuffling, logging, checkpoints.

Determinism contract: a (config, dataset, seed) triple fully determines the
batch sequence, the dropout stream, and therefore the loss curve; resuming
from a checkpoint restores the data order and RNG states and continues the
iteration counter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datasynth.store import LoadedDataset
from ..errors import ConfigInvalid, DatasetEmpty
from ..models import MhnConfig, MhnModel
from ..nnruntime import LearningSchedule, adam_step, load_checkpoint, save_checkpoint
from .losses import LossWeights, bce_node, mse_node, residual_displacement_targets, total_loss

DESK_PHASES = ((3000, 1.0, 0.0), (2000, 1.0, 10.0), (2000, 1.0, 0.0))
FULL_PHASES = ((2_000_000, 1.0, 0.0), (1_000_000, 1.0, 10.0), (1_000_000, 1.0, 0.0))


@dataclass(frozen=True)
class TrainConfig:
    model: str = "mhn"              # "mhn" | "mhn_m"
    preset: str = "desk"
    n_scales: int = 2
    patch_size: int = 64
    base_channels: int = 16
    dropout_keep: float = 0.8
    batch_size: int = 8
    seed: int = 0
    initial_rate: float = 1e-4
    decay_step: int = 100_000
    decay_rate: float = 0.96
    phases: tuple = DESK_PHASES
    checkpoint_every: int = 1000
    dtype: str = "float32"

    def __post_init__(self):
        if self.model not in ("mhn", "mhn_m"):
            raise ConfigInvalid(f"unknown model kind {self.model!r}")
        if self.batch_size < 2:
            raise ConfigInvalid("batch size must be at least 2 (batch norm)")
        if not self.phases:
            raise ConfigInvalid("phase plan is empty")
        for it, sf, sd in self.phases:
            if it <= 0:
                raise ConfigInvalid("every phase needs a positive iteration count")
            LossWeights(sf, sd)  # validates non-negative / not both zero

    @property
    def total_iterations(self) -> int:
        return sum(int(p[0]) for p in self.phases)

    def schedule(self) -> LearningSchedule:
        return LearningSchedule(self.initial_rate, self.decay_step, self.decay_rate)

    def model_config(self) -> MhnConfig:
        return MhnConfig(
            n_scales=self.n_scales,
            patch_size=self.patch_size,
            base_channels=self.base_channels,
            dropout_keep=self.dropout_keep,
            mask_enabled=self.model == "mhn_m",
            seed=self.seed,
            dtype=self.dtype,
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "preset": self.preset,
            "n_scales": self.n_scales,
            "patch_size": self.patch_size,
            "base_channels": self.base_channels,
            "dropout_keep": self.dropout_keep,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "initial_rate": self.initial_rate,
            "decay_step": self.decay_step,
            "decay_rate": self.decay_rate,
            "phases": [list(p) for p in self.phases],
            "checkpoint_every": self.checkpoint_every,
            "dtype": self.dtype,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["phases"] = tuple(tuple(p) for p in d.get("phases", DESK_PHASES))
        return TrainConfig(**d)


def _phase_of(iteration: int, phases) -> tuple[int, float, float]:
    """(phase index, sigma_f, sigma_d) for a 1-based global iteration."""
    upper = 0
    for i, (n, sf, sd) in enumerate(phases):
        upper += int(n)
        if iteration <= upper:
            return i, float(sf), float(sd)
    n, sf, sd = phases[-1]
    return len(phases) - 1, float(sf), float(sd)


def _downscale_mask_pair(pair: np.ndarray, steps: int) -> np.ndarray:
    """(B, 2, s, s) binary masks to level `steps`: box average then >= 0.5."""
    b, c, h, w = pair.shape
    out = pair.reshape(b * c, h, w)
    for _ in range(steps):
        bh, hh, ww = out.shape
        out = out.reshape(bh, hh // 2, 2, ww // 2, 2).mean(axis=(2, 4))
    out = (out >= 0.5).astype(np.float64)
    return out.reshape(b, c, out.shape[1], out.shape[2])


class _BatchSampler:
    """Epoch-shuffled index stream with serializable position."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n = n
        self.batch = batch
        self.rng = rng
        self.perm = rng.permutation(n)
        self.cursor = 0

    def next_batch(self) -> np.ndarray:
        if self.cursor + self.batch > self.n:
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.perm[self.cursor:self.cursor + self.batch]
        self.cursor += self.batch
        return idx

    def state(self) -> dict:
        return {"perm": self.perm.tolist(), "cursor": int(self.cursor),
                "rng": self.rng.bit_generator.state}

    def restore(self, state: dict) -> None:
        self.perm = np.array(state["perm"], dtype=np.int64)
        self.cursor = int(state["cursor"])
        self.rng.bit_generator.state = state["rng"]


def train(config: TrainConfig, dataset: LoadedDataset, out_dir,
          resume=None) -> Path:
    """Run the phase plan over the dataset; writes losses.csv plus periodic
    and final checkpoints under out_dir; returns the final checkpoint path."""
    if len(dataset) == 0:
        raise DatasetEmpty("training dataset has no samples")
    if len(dataset) < config.batch_size:
        raise ConfigInvalid(
            f"batch {config.batch_size} exceeds dataset size {len(dataset)}")
    if dataset.patch_size != config.patch_size:
        raise ConfigInvalid(
            f"dataset patches are {dataset.patch_size}px, config expects "
            f"{config.patch_size}px")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = MhnModel(config.model_config())
    params = model.parameters()
    schedule = config.schedule()
    sampler = _BatchSampler(len(dataset), config.batch_size,
                            np.random.default_rng(config.seed + 2))
    start_iteration = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt["kind"] != config.model:
            raise ConfigInvalid(
                f"checkpoint is a {ckpt['kind']} model, config wants {config.model}")
        model.load_arrays(ckpt["params"], ckpt["buffers"], ckpt["opt"])
        start_iteration = int(ckpt["iteration"])
        state = ckpt.get("train_state") or {}
        if "sampler" in state:
            sampler.restore(state["sampler"])
        if "dropout_rng" in state:
            model.dropout_rng.bit_generator.state = state["dropout_rng"]

    masked = config.model == "mhn_m"
    n_scales = config.n_scales
    rows = []

    def save(path, iteration):
        save_checkpoint(
            path,
            kind=config.model,
            iteration=iteration,
            model_config=model.cfg.to_dict(),
            params=params,
            buffers=model.buffers(),
            train_config=config.to_dict(),
            train_state={"sampler": sampler.state(),
                         "dropout_rng": model.dropout_rng.bit_generator.state},
        )

    total = config.total_iterations
    for iteration in range(start_iteration + 1, total + 1):
        phase_idx, sigma_f, sigma_d = _phase_of(iteration, config.phases)
        idx = sampler.next_batch()
        i1 = dataset.patch_b[idx]
        i2 = dataset.patch_a[idx]
        gt_h = dataset.homography[idx]

        res = model.forward_batch(i1, i2, mode="train")
        targets = residual_displacement_targets(gt_h, res.pre_cascades,
                                                config.patch_size)
        lf_nodes = [
            mse_node(res.displacements[k],
                     targets[k].reshape(-1, 8, 1, 1))
            for k in range(n_scales)
        ]
        ld_nodes = []
        if masked and sigma_d > 0:
            # channel 0 tracks i1 = patch_b, channel 1 tracks i2 = patch_a
            pair = np.stack([dataset.mask_b[idx], dataset.mask_a[idx]], axis=1)
            for k in range(n_scales):
                gt_masks = _downscale_mask_pair(pair, k)
                ld_nodes.append(bce_node(res.masks[k], gt_masks))

        loss = total_loss(lf_nodes, ld_nodes, LossWeights(sigma_f, sigma_d))
        model.zero_grads()
        loss.backward()
        adam_step(params.values(), schedule, iteration)

        row = [iteration, phase_idx, float(loss.data)]
        row += [float(n.data) for n in lf_nodes]
        row += ([float(n.data) for n in ld_nodes] if ld_nodes else [0.0] * n_scales)
        row.append(schedule.rate(iteration))
        rows.append(row)

        if config.checkpoint_every and iteration % config.checkpoint_every == 0:
            save(out / "checkpoint.ckpt", iteration)

    final = out / "model.ckpt"
    save(final, total)

    with (out / "losses.csv").open("w", newline="") as f:
        w = csv.writer(f)
        header = ["iteration", "phase", "total"]
        header += [f"lf_{k}" for k in range(n_scales)]
        header += [f"ld_{k}" for k in range(n_scales)]
        header.append("learning_rate")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return final


def load_model(checkpoint_path) -> tuple[MhnModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, manifest)."""
    ckpt = load_checkpoint(checkpoint_path)
    model = MhnModel(MhnConfig.from_dict(ckpt["model_config"]))
    model.load_arrays(ckpt["params"], ckpt["buffers"], ckpt["opt"])
    return model, ckpt
