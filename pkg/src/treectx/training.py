"""Mini-batch SGD training with per-epoch validation and the metrics suite.

Examples are shuffled every epoch under the run seed; gradients are
accumulated on per-example tapes, averaged over the batch, and applied
with plain SGD (no momentum, no schedule).  The returned checkpoint is the
parameter state of the epoch whose validation cross-entropy was lowest
(earliest epoch on ties).
"""

from __future__ import annotations

import csv
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ingest
from .autodiff import sgd_step
from .errors import CheckpointError, TrainingError, TreectxError
from .ingest import Page, TagVocabulary, feature_matrix
from .models import (
    ModelKind,
    ModelParams,
    Prediction,
    checkpoint_dict,
    forward_example,
    init_model,
    model_from_checkpoint,
    predict_example,
)
from .tree import AttributedTree

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    model: ModelKind | str = ModelKind.MONO_BU
    dedicated_context_kernel: bool = False
    epochs: int = 150
    batch_size: int = 50
    learning_rate: float = 0.0025
    seed: int = 0
    feature_mask: tuple[int, ...] = ()  # slots to drop; BBOX_SLOTS for the ablation
    negatives_per_page: int = 1
    hidden: int = 150
    classes: tuple[str, ...] = ingest.CLASS_NAMES
    threads: int = 1

    def __post_init__(self) -> None:
        self.model = ModelKind(self.model)
        self.classes = tuple(self.classes)
        self.feature_mask = tuple(sorted(int(i) for i in self.feature_mask))
        # lr 0 is allowed: a zero-rate run leaves the initialization untouched
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise TrainingError(
                f"invalid config: epochs={self.epochs}, batch_size={self.batch_size}, "
                f"lr={self.learning_rate}"
            )


@dataclass(frozen=True)
class Example:
    """One training/evaluation item: a target node in a featurized page."""

    page_id: str
    tree: AttributedTree
    feats: np.ndarray  # one row per node, shared across the page's examples
    node: int
    label: int  # index into the task's class list


def prepare_examples(
    pages: Sequence[Page],
    classes: Sequence[str],
    vocab: TagVocabulary,
    mask: Sequence[int] = (),
    negatives_per_page: int = 0,
    seed: int = 0,
    standardizer: ingest.Standardizer | None = None,
) -> list[Example]:
    """Featurize pages once and collect every target node for the task.

    Labeled nodes whose class is in `classes` become examples.  When the
    task includes "subjectnode" the label is planted at the LCA of name,
    price and mainpicture (pages missing one of those are skipped with a
    warning); when it includes "negative", k unlabeled nodes per page are
    subsampled under a page-derived seed.
    """
    class_index = {c: i for i, c in enumerate(classes)}
    examples: list[Example] = []
    for page in pages:
        tree = page.tree
        if "subjectnode" in class_index:
            try:
                tree = ingest.augment_subject_node(tree)
            except TreectxError as e:
                log.warning("skipping page %s: %s", page.page_id, e)
                continue
        feats = feature_matrix(tree, vocab, mask, standardizer)
        for n, payload in enumerate(tree.payloads):
            if payload.label is not None and payload.label in class_index:
                examples.append(Example(page.page_id, tree, feats, n, class_index[payload.label]))
        if "negative" in class_index and negatives_per_page > 0:
            page_seed = (seed ^ zlib.crc32(page.page_id.encode("utf-8"))) & 0x7FFFFFFF
            negs = ingest.sample_negatives(
                Page(tree, page.region, page.page_id), negatives_per_page, page_seed
            )
            for ex in negs:
                examples.append(Example(page.page_id, tree, feats, ex.node, class_index["negative"]))
    return examples


# -- metrics ------------------------------------------------------------------


def f1_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def macro_average(per_class_f1: Sequence[float]) -> float:
    """Unweighted mean of per-class F1 scores."""
    return float(np.mean(per_class_f1))


def weighted_average(per_class_f1: Sequence[float], supports: Sequence[int]) -> float:
    total = sum(supports)
    if total == 0:
        return 0.0
    return float(sum(f * s for f, s in zip(per_class_f1, supports)) / total)


@dataclass
class MetricsReport:
    classes: tuple[str, ...]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    loss: float
    absent: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "loss": self.loss,
            "absent": self.absent,
        }

    def table(self) -> str:
        width = max(len(c) for c in self.classes + ("weighted avg",))
        lines = [f"{'':<{width}}  precision  recall      f1  support"]
        for i, c in enumerate(self.classes):
            lines.append(
                f"{c:<{width}}  {self.precision[i]:>9.4f}  {self.recall[i]:>6.4f}  {self.f1[i]:>6.4f}  {self.support[i]:>7d}"
            )
        lines.append("")
        for name, value in (
            ("micro avg", self.micro_f1),
            ("macro avg", self.macro_f1),
            ("weighted avg", self.weighted_f1),
        ):
            lines.append(f"{name:<{width}}  {'':>9}  {'':>6}  {value:>6.4f}  {sum(self.support):>7d}")
        lines.append(f"loss: {self.loss:.6f}")
        if self.absent:
            lines.append(f"absent classes (support 0, no predictions): {', '.join(self.absent)}")
        return "\n".join(lines)


def compute_metrics(
    y_true: Sequence[int], y_pred: Sequence[int], classes: Sequence[str], loss: float
) -> MetricsReport:
    """One-vs-rest precision/recall/F1 per class plus the three aggregates.

    F1 is defined as 0 whenever precision + recall is 0; micro counts are
    pooled over classes; macro is the unweighted mean; weighted is the
    support-weighted mean.
    """
    k = len(classes)
    tp = np.zeros(k, dtype=int)
    fp = np.zeros(k, dtype=int)
    fn = np.zeros(k, dtype=int)
    for t, p in zip(y_true, y_pred):
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    precision = [float(tp[i] / (tp[i] + fp[i])) if tp[i] + fp[i] else 0.0 for i in range(k)]
    recall = [float(tp[i] / (tp[i] + fn[i])) if tp[i] + fn[i] else 0.0 for i in range(k)]
    f1 = [f1_score(p, r) for p, r in zip(precision, recall)]
    support = [int(tp[i] + fn[i]) for i in range(k)]
    micro_p = tp.sum() / max(tp.sum() + fp.sum(), 1)
    micro_r = tp.sum() / max(tp.sum() + fn.sum(), 1)
    absent = [classes[i] for i in range(k) if support[i] == 0 and tp[i] + fp[i] == 0]
    if absent:
        log.warning("classes absent from both truth and predictions: %s", absent)
    return MetricsReport(
        classes=tuple(classes),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        micro_f1=float(f1_score(micro_p, micro_r)),
        macro_f1=float(macro_average(f1)),
        weighted_f1=float(weighted_average(f1, support)),
        loss=float(loss),
        absent=absent,
    )


# -- the loop -----------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    report: MetricsReport


def _predictions(model: ModelParams, examples: Sequence[Example], threads: int) -> list[Prediction]:
    def run(ex: Example) -> Prediction:
        return predict_example(model, ex.tree, ex.node, ex.feats, ex.label)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, examples))
    return [run(ex) for ex in examples]


def evaluate_model(
    model: ModelParams,
    examples: Sequence[Example],
    classes: Sequence[str],
    threads: int = 1,
) -> MetricsReport:
    if not examples:
        raise TrainingError("evaluate: empty split")
    preds = _predictions(model, examples, threads)
    loss = float(np.mean([p.loss for p in preds]))
    return compute_metrics([e.label for e in examples], [p.predicted for p in preds], classes, loss)


def train(
    config: TrainConfig,
    train_examples: Sequence[Example],
    val_examples: Sequence[Example],
    vocab: TagVocabulary,
) -> tuple[dict, list[EpochLog]]:
    """Run the full loop; returns (best checkpoint dict, one log per epoch)."""
    if not train_examples or not val_examples:
        raise TrainingError("train: empty train or validation split")
    input_dim = train_examples[0].feats.shape[1]
    model = init_model(
        config.model,
        input_dim,
        len(config.classes),
        seed=config.seed,
        hidden=config.hidden,
        dedicated_context_kernel=config.dedicated_context_kernel,
    )
    model.zero_grads()
    shuffle_rng = np.random.default_rng(config.seed)
    params = model.params()
    best_val = np.inf
    best_epoch = -1
    best_values: list[np.ndarray] = []
    logs: list[EpochLog] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_examples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_examples[i] for i in order[start : start + config.batch_size]]
            for ex in batch:
                try:
                    tape, _, loss = forward_example(model, ex.tree, ex.node, ex.feats, ex.label)
                except TreectxError as e:
                    raise TrainingError(
                        f"epoch {epoch}, batch {start // config.batch_size}, "
                        f"page {ex.page_id}: {e}"
                    ) from e
                losses.append(float(tape.value(loss)))
                tape.backward(loss)
            for p in params:
                p.grad /= len(batch)
            sgd_step(params, config.learning_rate)
        report = evaluate_model(model, val_examples, config.classes, config.threads)
        logs.append(EpochLog(epoch, float(np.mean(losses)), report.loss, report))
        if report.loss < best_val:
            best_val = report.loss
            best_epoch = epoch
            best_values = [p.value.copy() for p in params]
    for p, v in zip(params, best_values):
        p.value = v
    checkpoint = checkpoint_dict(
        model,
        classes=config.classes,
        tag_vocab=vocab.tags,
        feature_mask=config.feature_mask,
        metadata={"epoch": best_epoch, "val_loss": best_val},
    )
    return checkpoint, logs


def evaluate(checkpoint: dict, examples: Sequence[Example], threads: int = 1) -> MetricsReport:
    model = model_from_checkpoint(checkpoint)
    return evaluate_model(model, examples, checkpoint["classes"], threads)


def predict(checkpoint: dict, page: Page, node: int) -> Prediction:
    """Classify one node of a parsed page with a checkpoint's frozen state."""
    model = model_from_checkpoint(checkpoint)
    vocab = TagVocabulary(checkpoint["tag_vocab"])
    mask = checkpoint.get("feature_mask", [])
    feats = feature_matrix(page.tree, vocab, mask)
    if feats.shape[1] != model.input_dim:
        raise CheckpointError(
            f"featurized width {feats.shape[1]} does not match checkpoint input {model.input_dim}"
        )
    return predict_example(model, page.tree, node, feats)


# -- the epoch log as CSV -----------------------------------------------------


def write_epoch_csv(logs: Sequence[EpochLog], classes: Sequence[str], path: str | Path) -> None:
    """epoch, train_loss, val_loss, then one validation-F1 column per class."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"] + [f"f1_{c}" for c in classes])
        for entry in logs:
            writer.writerow(
                [entry.epoch, repr(float(entry.train_loss)), repr(float(entry.val_loss))]
                + [repr(float(f)) for f in entry.report.f1]
            )


def read_epoch_csv(path: str | Path) -> tuple[list[str], list[dict[str, float]]]:
    """Returns (class names, one row dict per epoch)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [{k: float(v) for k, v in row.items()} for row in reader]
        classes = [c[3:] for c in (reader.fieldnames or []) if c.startswith("f1_")]
    return classes, rows
