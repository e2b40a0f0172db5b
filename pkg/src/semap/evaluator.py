"""Zero-shot prediction, accuracy reports, and the planted desk-scale benchmark.

The synthetic benchmark plants a known class alignment: each downstream class
is a small perturbation of one pretrained label embedding, and its images are
noisy copies of a template crafted (by sign-gradient ascent on the frozen
backbone) to fire exactly the planted pretrained index. Whether a mapping
strategy recovers the planted assignment is then checkable exactly, and
"semantic mapping beats prefix mapping" becomes a testable property instead
of a large-scale observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backbone import (
    FrozenBackbone,
    Prompt,
    backward_canvas,
    compose,
    composite_forward,
    default_pad,
    forward,
    make_backbone,
    padding_prompt,
    save_backbone,
)
from .embedding_io import (
    EmbeddingMatrix,
    LabelSet,
    LogitBatch,
    write_embeddings,
    write_labels,
    write_logits,
)
from .errors import InvalidInputError, ShapeError
from .mapping import (
    DEFAULT_CAP,
    DEFAULT_EPSILON,
    DEFAULT_GAMMA,
    MappingTable,
    apply_mapping_batch,
    fm_map,
    rm_map,
    semap1,
    semap_a,
    semap_k,
)
from .numerics import Rng, softmax
from .similarity import build_profiles
from .trainer import TrainConfig, train


@dataclass
class EvalReport:
    strategy: str
    mode: str  # zero_shot | prompted | random_guess
    dataset_id: str
    count: int
    accuracy: float
    per_class: np.ndarray  # float64 (m,); nan for classes with no examples
    hyperparams: dict[str, float | int] = field(default_factory=dict)


def predict_zero_shot(table: MappingTable, logits: np.ndarray) -> int:
    """Argmax over mapped scores; ties break toward the smallest class index."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size != table.n:
        raise ShapeError(f"expected logits of length {table.n}, got shape {logits.shape}")
    return int(np.argmax(apply_mapping_batch(table, logits[None, :])[0]))


def predict_batch(table: MappingTable, scores: np.ndarray) -> np.ndarray:
    """Row-wise predict_zero_shot."""
    return np.argmax(apply_mapping_batch(table, scores), axis=1)


def _report_from_predictions(
    preds: np.ndarray,
    labels: np.ndarray,
    m: int,
    strategy: str,
    mode: str,
    dataset_id: str,
    hyperparams: dict | None = None,
) -> EvalReport:
    labels = np.asarray(labels, dtype=np.int64)
    correct = preds == labels
    per_class = np.full(m, np.nan)
    for i in range(m):
        sel = labels == i
        if sel.any():
            per_class[i] = float(correct[sel].sum()) / int(sel.sum())
    return EvalReport(
        strategy,
        mode,
        dataset_id,
        int(labels.size),
        float(correct.sum()) / labels.size,
        per_class,
        dict(hyperparams or {}),
    )


def evaluate(
    table: MappingTable,
    batch: LogitBatch,
    dataset_id: str = "",
    mode: str = "zero_shot",
) -> EvalReport:
    """Accuracy and per-class breakdown of mapped argmax predictions."""
    if batch.labels is None:
        raise InvalidInputError("evaluate requires a logit batch with labels")
    if batch.width != table.n:
        raise ShapeError(f"logit width {batch.width} != table n={table.n}")
    labels = np.asarray(batch.labels, dtype=np.int64)
    if labels.max() >= table.m:
        raise InvalidInputError(f"label {labels.max()} out of range for m={table.m}")
    preds = predict_batch(table, batch.scores)
    return _report_from_predictions(
        preds, labels, table.m, table.strategy, mode, dataset_id, table.hyperparams
    )


def evaluate_random_guess(
    batch: LogitBatch, m: int, rng: Rng, dataset_id: str = ""
) -> EvalReport:
    """Uniform random predictions; the chance baseline at expected accuracy 1/m."""
    if batch.labels is None:
        raise InvalidInputError("evaluate requires a logit batch with labels")
    preds = np.array([rng.below(m) for _ in range(batch.count)], dtype=np.int64)
    return _report_from_predictions(
        preds, np.asarray(batch.labels), m, "random_guess", "random_guess", dataset_id
    )


# ---------------------------------------------------------------------------
# synthetic benchmark


@dataclass
class SyntheticBenchmark:
    """Desk-scale planted task; fully regenerable from its seed block."""

    seed: int
    m: int
    n: int
    d: int
    per_class: int
    emb_dim: int
    emb_noise: float
    image_noise: float
    hidden: int
    rm_adversarial: bool
    planted: np.ndarray  # int64 (m,), the true downstream -> pretrained map
    pre_labels: LabelSet
    down_labels: LabelSet
    pre_embeddings: EmbeddingMatrix
    down_embeddings: EmbeddingMatrix
    backbone: FrozenBackbone
    templates: np.ndarray  # (m, side, side) clean class images
    train_images: np.ndarray  # (m * per_class, side, side)
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray

    @property
    def image_side(self) -> int:
        return self.d - 2 * default_pad(self.d)

    def zero_prompt(self) -> Prompt:
        return padding_prompt(self.d, default_pad(self.d))

    def train_dataset(self) -> list[tuple[np.ndarray, int]]:
        return [(img, int(lab)) for img, lab in zip(self.train_images, self.train_labels)]

    def test_dataset(self) -> list[tuple[np.ndarray, int]]:
        return [(img, int(lab)) for img, lab in zip(self.test_images, self.test_labels)]

    def logits_for(self, images: np.ndarray, labels: np.ndarray,
                   prompt: Prompt | None = None) -> LogitBatch:
        """Backbone outputs on composed images; zero prompt = unprompted."""
        prompt = prompt or self.zero_prompt()
        scores = np.stack(
            [forward(self.backbone, compose(img, prompt)) for img in images]
        )
        return LogitBatch(scores.astype(np.float32), labels)

    def train_logits(self, prompt: Prompt | None = None) -> LogitBatch:
        return self.logits_for(self.train_images, self.train_labels, prompt)

    def test_logits(self, prompt: Prompt | None = None) -> LogitBatch:
        return self.logits_for(self.test_images, self.test_labels, prompt)


def _unit_rows(rng: Rng, rows: int, dim: int) -> np.ndarray:
    out = np.empty((rows, dim), dtype=np.float64)
    for i in range(rows):
        v = rng.normals(dim)
        out[i] = v / np.linalg.norm(v)
    return out


_CRAFT_STARTS = ((0.25, 0.75), (0.0, 1.0), (0.4, 0.6), (0.1, 0.9))


def _margin(logits: np.ndarray, target: int) -> tuple[float, int]:
    masked = np.where(np.arange(logits.size) == target, -np.inf, logits)
    rival = int(np.argmax(masked))
    return float(logits[target] - logits[rival]), rival


def _craft_template(
    backbone: FrozenBackbone,
    target: int,
    prompt: Prompt,
    rng: Rng,
    margin_goal: float,
    restarts: int = 5,
) -> np.ndarray | None:
    """Gradient ascent for an image whose top logit is ``target`` by a margin.

    Phase 1 ascends log softmax[target] (pushes all rivals down at once);
    phase 2 refines the hinge margin against the current best rival. The
    prompt stays zero, only the centered image region moves, each step clamped
    to [0, 1]. Returns None when the margin goal is unreachable from
    ``restarts`` seeded starts; not every output index of a random frozen net
    is reachable from the image box, and callers plant only craftable targets.
    """
    side = prompt.image_side
    p = (backbone.d - side) // 2
    for attempt in range(restarts):
        lo, hi = _CRAFT_STARTS[attempt % len(_CRAFT_STARTS)]
        x = rng.uniforms(side * side, lo, hi).reshape(side, side)
        eta = 1.0 + attempt
        for _ in range(250):
            state = composite_forward(backbone, x, prompt)
            g = -softmax(state.logits)
            g[target] += 1.0
            dcanvas = backward_canvas(backbone, state, g)
            x = np.clip(x + eta * dcanvas[p : p + side, p : p + side], 0.0, 1.0)
        for _ in range(200):
            state = composite_forward(backbone, x, prompt)
            margin, rival = _margin(state.logits, target)
            if margin >= margin_goal:
                return x
            g = np.zeros(state.logits.size)
            g[target] = 1.0
            g[rival] = -1.0
            dcanvas = backward_canvas(backbone, state, g)
            x = np.clip(x + 0.5 * dcanvas[p : p + side, p : p + side], 0.0, 1.0)
    return None


def make_synthetic_benchmark(
    seed: int,
    m: int = 4,
    n: int = 20,
    d: int = 16,
    per_class: int = 30,
    emb_dim: int = 32,
    emb_noise: float = 0.01,
    image_noise: float = 0.05,
    hidden: int = 32,
    rm_adversarial: bool = False,
    margin_goal: float = 0.5,
) -> SyntheticBenchmark:
    """Construct the planted benchmark; deterministic in the seed.

    Planted targets are drawn in seeded shuffle order from the candidate pool
    (all of [0, n), or [m, n) with ``rm_adversarial`` so prefix mapping
    carries no signal), skipping candidates for which no template reaches
    ``margin_goal``. A margin of 0.5 keeps the noisy argmax stable at the
    default image noise.
    """
    if m < 1 or n < 1 or m > n:
        raise InvalidInputError(f"need 1 <= m <= n, got m={m} n={n}")
    if rm_adversarial and n - m < m:
        raise InvalidInputError(f"rm_adversarial needs n - m >= m, got m={m} n={n}")
    if per_class < 1 or emb_dim < 2 or d < 4:
        raise InvalidInputError("per_class, emb_dim or d too small")
    if emb_noise < 0 or image_noise < 0:
        raise InvalidInputError("noise scales must be >= 0")

    rng = Rng(seed)
    pre_vecs = _unit_rows(rng, n, emb_dim)

    candidates = np.arange(m, n) if rm_adversarial else np.arange(n)
    rng.shuffle(candidates)

    backbone = make_backbone(rng.next_u64(), d, hidden, n)
    prompt = padding_prompt(d, default_pad(d))
    side = prompt.image_side

    planted_list: list[int] = []
    template_list: list[np.ndarray] = []
    for candidate in candidates:
        template = _craft_template(backbone, int(candidate), prompt, rng, margin_goal)
        if template is not None:
            planted_list.append(int(candidate))
            template_list.append(template)
            if len(planted_list) == m:
                break
    if len(planted_list) < m:
        raise InvalidInputError(
            f"only {len(planted_list)} of {len(candidates)} candidate indices "
            f"admit a template at margin {margin_goal}; need {m}"
        )
    planted = np.array(planted_list, dtype=np.int64)
    templates = np.stack(template_list)

    down_vecs = np.empty((m, emb_dim), dtype=np.float64)
    for i in range(m):
        down_vecs[i] = pre_vecs[planted[i]] + emb_noise * rng.normals(emb_dim)

    width = len(str(max(n - 1, 9)))
    pre_labels = LabelSet([f"pre_{j:0{width}d}" for j in range(n)], "pretrained")
    down_labels = LabelSet([f"class_{i:02d}" for i in range(m)], "downstream")
    pre_emb = EmbeddingMatrix(pre_vecs.astype(np.float32), pre_labels)
    down_emb = EmbeddingMatrix(down_vecs.astype(np.float32), down_labels)

    def noisy_split() -> tuple[np.ndarray, np.ndarray]:
        images = np.empty((m * per_class, side, side), dtype=np.float64)
        labels = np.empty(m * per_class, dtype=np.uint32)
        pos = 0
        for i in range(m):
            for _ in range(per_class):
                noise = image_noise * rng.normals(side * side).reshape(side, side)
                images[pos] = np.clip(templates[i] + noise, 0.0, 1.0)
                labels[pos] = i
                pos += 1
        return images, labels

    train_images, train_labels = noisy_split()
    test_images, test_labels = noisy_split()

    return SyntheticBenchmark(
        int(seed), m, n, d, per_class, emb_dim, emb_noise, image_noise, hidden,
        rm_adversarial, planted, pre_labels, down_labels, pre_emb, down_emb,
        backbone, templates, train_images, train_labels, test_images, test_labels,
    )


BENCHMARK_FILES = (
    "pre_labels.txt",
    "down_labels.txt",
    "pre_embeddings.bin",
    "down_embeddings.bin",
    "train_data.bin",
    "test_data.bin",
    "train_logits.bin",
    "test_logits.bin",
    "backbone.txt",
    "manifest.txt",
)


def write_benchmark(bench: SyntheticBenchmark, out_dir: str | Path) -> list[Path]:
    """Write the full benchmark as loadable artifact files.

    Image splits reuse the logit-file container with one flattened
    side*side image per row.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    side = bench.image_side
    write_labels(out / "pre_labels.txt", bench.pre_labels)
    write_labels(out / "down_labels.txt", bench.down_labels)
    write_embeddings(out / "pre_embeddings.bin", bench.pre_embeddings)
    write_embeddings(out / "down_embeddings.bin", bench.down_embeddings)
    write_logits(
        out / "train_data.bin",
        LogitBatch(bench.train_images.reshape(-1, side * side).astype(np.float32),
                   bench.train_labels),
    )
    write_logits(
        out / "test_data.bin",
        LogitBatch(bench.test_images.reshape(-1, side * side).astype(np.float32),
                   bench.test_labels),
    )
    write_logits(out / "train_logits.bin", bench.train_logits())
    write_logits(out / "test_logits.bin", bench.test_logits())
    save_backbone(out / "backbone.txt", bench.backbone)
    manifest = [
        "semap_toy_benchmark",
        f"seed: {bench.seed}",
        f"m: {bench.m}",
        f"n: {bench.n}",
        f"d: {bench.d}",
        f"per_class: {bench.per_class}",
        f"emb_dim: {bench.emb_dim}",
        f"emb_noise: {bench.emb_noise!r}",
        f"image_noise: {bench.image_noise!r}",
        f"hidden: {bench.hidden}",
        f"rm_adversarial: {int(bench.rm_adversarial)}",
        f"image_side: {side}",
        f"planted: {' '.join(str(int(t)) for t in bench.planted)}",
        "files: " + " ".join(name for name in BENCHMARK_FILES if name != "manifest.txt"),
    ]
    (out / "manifest.txt").write_bytes(("\n".join(manifest) + "\n").encode("utf-8"))
    return [out / name for name in BENCHMARK_FILES]


# ---------------------------------------------------------------------------
# strategy comparison


def build_strategy_table(
    bench: SyntheticBenchmark,
    strategy: str,
    k: int = 1,
    epsilon: float = DEFAULT_EPSILON,
    gamma: float = DEFAULT_GAMMA,
    cap: int = DEFAULT_CAP,
) -> MappingTable:
    """Build one strategy's table from the benchmark's own artifacts."""
    if strategy == "rm":
        return rm_map(bench.m, bench.n)
    if strategy == "fm":
        return fm_map(bench.train_logits(), bench.m, bench.n)
    profiles = build_profiles(bench.down_embeddings, bench.pre_embeddings)
    if strategy == "semap1":
        return semap1(profiles)
    if strategy == "semap_k":
        return semap_k(profiles, k)
    if strategy == "semap_a":
        return semap_a(profiles, epsilon, gamma, cap)
    raise InvalidInputError(f"unknown strategy {strategy!r}")


def compare_strategies(
    bench: SyntheticBenchmark,
    strategies: Sequence[str] = ("rm", "fm", "semap1", "semap_a"),
    modes: Sequence[str] = ("zero_shot",),
    train_cfg: TrainConfig | None = None,
    **table_kwargs,
) -> list[EvalReport]:
    """One report per strategy x mode, in the given fixed order.

    ``prompted`` mode trains a fresh prompt per strategy with ``train_cfg``
    (defaults to TrainConfig()) and evaluates on prompted test logits.
    """
    dataset_id = f"toy-seed{bench.seed}"
    test_batch = bench.test_logits()
    reports = []
    for strategy in strategies:
        table = build_strategy_table(bench, strategy, **table_kwargs)
        for mode in modes:
            if mode == "zero_shot":
                reports.append(evaluate(table, test_batch, dataset_id, "zero_shot"))
            elif mode == "prompted":
                cfg = train_cfg or TrainConfig()
                report = train(bench.backbone, table, bench.train_dataset(), cfg)
                prompted_batch = bench.test_logits(report.prompt)
                reports.append(evaluate(table, prompted_batch, dataset_id, "prompted"))
            else:
                raise InvalidInputError(f"unknown mode {mode!r}")
    return reports


def format_report(report: EvalReport) -> str:
    """Structured text form of one EvalReport."""
    lines = [
        "eval_report",
        f"strategy: {report.strategy}",
        f"mode: {report.mode}",
        f"dataset: {report.dataset_id}",
        f"examples: {report.count}",
        f"accuracy: {report.accuracy!r}",
        "per_class: " + " ".join(repr(float(v)) for v in report.per_class),
    ]
    if report.hyperparams:
        lines.append(
            "hyperparams: "
            + " ".join(f"{key}={value!r}" for key, value in report.hyperparams.items())
        )
    return "\n".join(lines) + "\n"


def format_comparison(reports: Sequence[EvalReport]) -> str:
    """Single document with one aligned row per report."""
    header = f"{'strategy':<10} {'mode':<12} {'examples':>8} {'accuracy':>9}"
    lines = ["strategy_comparison", header]
    for r in reports:
        lines.append(f"{r.strategy:<10} {r.mode:<12} {r.count:>8} {r.accuracy:>9.4f}")
    return "\n".join(lines) + "\n"


def comparison_csv(reports: Sequence[EvalReport]) -> str:
    """Plot-ready CSV, one row per report, per-class columns appended."""
    m = max(len(r.per_class) for r in reports)
    cols = ["strategy", "mode", "dataset", "examples", "accuracy"]
    cols += [f"class_{i}" for i in range(m)]
    rows = [",".join(cols)]
    for r in reports:
        row = [r.strategy, r.mode, r.dataset_id, str(r.count), repr(r.accuracy)]
        row += [repr(float(v)) for v in r.per_class]
        row += [""] * (m - len(r.per_class))
        rows.append(",".join(row))
    return "\n".join(rows) + "\n"
