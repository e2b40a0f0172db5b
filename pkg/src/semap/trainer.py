"""Prompt optimization: SGD with momentum on masked prompt pixels.

The backbone and mapping table stay frozen; only prompt values move. The
loss is cross-entropy of the softmaxed m mapped scores. The prompt starts
at zero, so the initial model equals the zero-shot baseline and training
progress is directly measurable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backbone import (
    FrozenBackbone,
    Prompt,
    backward_canvas,
    composite_forward,
    default_pad,
    padding_prompt,
    patch_prompt,
)
from .errors import InvalidInputError, TrainingDivergedError
from .mapping import MappingTable, apply_mapping, scatter_mapping
from .numerics import Rng, cross_entropy


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    prompt_variant: str = "padding"
    pad: int | None = None  # None: d // 4
    patch_size: int | None = None  # None: d // 4, patch variants only

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        # lr = 0 is allowed as the degenerate no-op run (prompt stays at init)
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    epoch_accuracies: list[float]
    prompt: Prompt
    wall_time: float
    checksum_before: str
    checksum_after: str

    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def make_prompt(cfg: TrainConfig, d: int) -> Prompt:
    """Zero-initialized prompt per the config's variant and geometry."""
    if cfg.prompt_variant == "padding":
        pad = default_pad(d) if cfg.pad is None else cfg.pad
        return padding_prompt(d, pad)
    size = default_pad(d) if cfg.patch_size is None else cfg.patch_size
    return patch_prompt(d, size, random=(cfg.prompt_variant == "random_patch"))


def loss_and_grad(
    backbone: FrozenBackbone,
    table: MappingTable,
    prompt: Prompt,
    x: np.ndarray,
    label: int,
) -> tuple[float, np.ndarray]:
    """Cross-entropy of mapped scores and its gradient w.r.t. prompt values."""
    loss, grad, _ = _loss_grad_pred(backbone, table, prompt, x, label)
    return loss, grad


def _loss_grad_pred(backbone, table, prompt, x, label):
    label = int(label)
    if not 0 <= label < table.m:
        raise IndexError(f"label {label} out of range for m={table.m}")
    state = composite_forward(backbone, x, prompt)
    scores = apply_mapping(table, state.logits)
    loss, grad_scores = cross_entropy(scores, label)
    grad_logits = scatter_mapping(table, grad_scores)
    dcanvas = backward_canvas(backbone, state, grad_logits)
    grad = np.where(prompt.mask, dcanvas, 0.0)
    return loss, grad, int(np.argmax(scores))


def train(
    backbone: FrozenBackbone,
    table: MappingTable,
    dataset: Sequence[tuple[np.ndarray, int]],
    cfg: TrainConfig,
) -> TrainReport:
    """SGD with momentum on the prompt; backbone weights never change.

    Batches are formed by a seeded shuffle each epoch; the batch gradient is
    the mean of per-example gradients accumulated in batch order, so runs are
    bitwise reproducible for a fixed (cfg, data).
    """
    if len(dataset) == 0:
        raise InvalidInputError("train requires a non-empty dataset")
    for idx, (_, label) in enumerate(dataset):
        if not 0 <= int(label) < table.m:
            raise IndexError(f"label {label} at example {idx} out of range for m={table.m}")

    start = time.perf_counter()
    checksum_before = backbone.weight_checksum()
    prompt = make_prompt(cfg, backbone.d)
    velocity = np.zeros_like(prompt.values)
    rng = Rng(cfg.seed)
    order = np.arange(len(dataset))

    epoch_losses: list[float] = []
    epoch_accuracies: list[float] = []
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        total_loss = 0.0
        correct = 0
        for batch_no, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[lo : lo + cfg.batch_size]
            if prompt.variant == "random_patch":
                # momentum is kept in patch coordinates: the velocity block
                # moves with the patch content
                r0, c0, s = prompt.patch_row, prompt.patch_col, prompt.patch_size
                vpatch = velocity[r0 : r0 + s, c0 : c0 + s].copy()
                prompt.resample_location(rng)
                velocity = np.zeros_like(velocity)
                velocity[
                    prompt.patch_row : prompt.patch_row + s,
                    prompt.patch_col : prompt.patch_col + s,
                ] = vpatch
            grad_sum = np.zeros_like(prompt.values)
            for j in batch:
                x, label = dataset[j]
                loss, grad, pred = _loss_grad_pred(backbone, table, prompt, x, label)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {batch_no}"
                    )
                total_loss += loss
                correct += pred == int(label)
                grad_sum += grad
            grad_mean = grad_sum / len(batch)
            velocity = cfg.momentum * velocity + grad_mean
            prompt.values -= cfg.learning_rate * velocity
            prompt.remask()
        epoch_losses.append(total_loss / len(order))
        epoch_accuracies.append(correct / len(order))

    return TrainReport(
        epoch_losses,
        epoch_accuracies,
        prompt,
        time.perf_counter() - start,
        checksum_before,
        backbone.weight_checksum(),
    )


def format_train_report(report: TrainReport) -> str:
    """Structured text: header fields, then one row per epoch."""
    lines = [
        "train_report",
        f"epochs: {len(report.epoch_losses)}",
        f"wall_time_s: {report.wall_time:.3f}",
        f"checksum_before: {report.checksum_before}",
        f"checksum_after: {report.checksum_after}",
        "epoch loss accuracy",
    ]
    for e, (loss, acc) in enumerate(zip(report.epoch_losses, report.epoch_accuracies)):
        lines.append(f"{e} {loss!r} {acc!r}")
    return "\n".join(lines) + "\n"
