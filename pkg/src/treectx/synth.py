"""Deterministic generator of synthetic snapshots with planted labels.

Each page is a random tree (uniform parent attachment, branching capped at
4) with a planted chain under the root: grandparent -> parent -> target.
The target is always a leaf, so its subtree is the single node.  Where the
class signal lives depends on the task:

- local: the target's own font size sits in a class-specific band, so
  every model sees the signal directly.
- path-context: the grandparent (exactly 2 edges above the target)
  carries the class in its visibility index; only models that read the
  root-to-target path can recover it.
- sibling-context: a sibling branch of the target's parent carries the
  class in its font-size band; the bearer is off the root path and outside
  the target subtree, so only the embedding-fed downward pass sees it
  (through the grandparent's bottom-up summary).

Everything a blind model can see is constant across classes by
construction, which pins its accuracy at exactly the class balance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SynthError
from .ingest import (
    CLASS_NAMES,
    VISIBILITY,
    DomNode,
    ManifestEntry,
    Page,
    largest_remainder,
    serialize_snapshot,
    write_manifest,
)
from .tree import AttributedTree

TASKS = ("local", "path-context", "sibling-context")
TAG_POOL = ("div", "span", "a", "p", "img", "ul", "li", "h1", "table", "footer")
REGION = "synthetic"

NEUTRAL_FONT_SIZE = 5.0
FONT_WEIGHT = 100.0
BAND_WIDTH = 1.0
BAND_STRIDE = 8.0  # class c band: [1 + 8c, 2 + 8c]


@dataclass(frozen=True)
class SynthSpec:
    task: str = "local"
    pages: int = 90
    nodes_min: int = 20
    nodes_max: int = 60
    classes: tuple[str, ...] = ("name", "price")
    seed: int = 0

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise SynthError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.pages < 1:
            raise SynthError("pages must be >= 1")
        if self.nodes_min > self.nodes_max:
            raise SynthError(f"empty node range [{self.nodes_min}, {self.nodes_max}]")
        minimum = planted_node_count(self.task) + 1  # plus the root
        if self.nodes_min < minimum:
            raise SynthError(
                f"task {self.task!r} needs at least {minimum} nodes per page, "
                f"got nodes_min={self.nodes_min}"
            )
        if len(self.classes) < 2:
            raise SynthError("need at least 2 classes")
        for c in self.classes:
            if c not in CLASS_NAMES:
                raise SynthError(f"unknown class {c!r}")
        if self.task == "path-context" and len(self.classes) > len(VISIBILITY):
            raise SynthError("path-context supports at most 6 classes (one per visibility value)")


def planted_node_count(task: str) -> int:
    return 4 if task == "sibling-context" else 3


def font_band(class_idx: int) -> tuple[float, float]:
    lo = 1.0 + BAND_STRIDE * class_idx
    return lo, lo + BAND_WIDTH


def visibility_for_class(class_idx: int, n_classes: int) -> str:
    return VISIBILITY[round(class_idx * (len(VISIBILITY) - 1) / (n_classes - 1))]


def _background_node(rng: np.random.Generator) -> DomNode:
    return DomNode(
        tag=TAG_POOL[rng.integers(len(TAG_POOL))],
        bbox=(
            float(np.round(rng.uniform(0, 8), 2)),
            float(np.round(rng.uniform(0, 8), 2)),
            float(np.round(rng.uniform(0, 4), 2)),
            float(np.round(rng.uniform(0, 4), 2)),
        ),
        num_bitmap_images=int(rng.integers(3)),
        num_vector_images=int(rng.integers(2)),
        font_size=NEUTRAL_FONT_SIZE,
        font_weight=FONT_WEIGHT,
        visibility="visible",
        is_active=False,
    )


def _fixed_node(tag: str, bbox: tuple[float, float, float, float], active: bool = False) -> DomNode:
    return DomNode(
        tag=tag,
        bbox=bbox,
        num_bitmap_images=0,
        num_vector_images=0,
        font_size=NEUTRAL_FONT_SIZE,
        font_weight=FONT_WEIGHT,
        visibility="visible",
        is_active=active,
    )


def build_page(
    task: str,
    classes: Sequence[str],
    class_idx: int,
    n_nodes: int,
    rng: np.random.Generator,
    page_id: str,
) -> tuple[Page, int]:
    """One synthetic page; returns (page, target node index).

    All random draws happen before the class encoding is applied, so two
    calls with the same rng state and different class_idx differ only in
    the class-bearing attribute and the label.
    """
    n_planted = planted_node_count(task)
    n_background = n_nodes - n_planted

    # random backbone: node 0 is the root; the root keeps one child slot
    # free for the planted chain, every other node takes at most 4
    parents: list[int | None] = [None]
    payloads: list[DomNode] = [_fixed_node("body", (0.0, 0.0, 10.0, 10.0))]
    child_count = [0]
    for _ in range(1, n_background):
        limit = lambda i: 3 if i == 0 else 4
        eligible = [i for i in range(len(parents)) if child_count[i] < limit(i)]
        parent = int(eligible[rng.integers(len(eligible))])
        parents.append(parent)
        payloads.append(_background_node(rng))
        child_count[parent] += 1
        child_count.append(0)

    grandparent = len(parents)
    parents.append(0)
    payloads.append(_fixed_node("section", (1.0, 1.0, 2.0, 2.0)))
    parent = len(parents)
    parents.append(grandparent)
    payloads.append(_fixed_node("div", (1.0, 1.0, 1.5, 1.5)))
    target = len(parents)
    parents.append(parent)
    payloads.append(_fixed_node("button", (2.0, 2.0, 1.0, 1.0), active=True))
    sibling = None
    if task == "sibling-context":
        sibling = len(parents)
        parents.append(grandparent)
        payloads.append(_fixed_node("span", (3.0, 3.0, 1.0, 1.0)))

    # class encoding: drawn after the topology so the draw count above is
    # identical for every class
    lo, hi = font_band(class_idx)
    band_value = float(np.round(rng.uniform(lo, hi), 3))
    if task == "local":
        payloads[target] = replace(payloads[target], font_size=band_value)
    elif task == "path-context":
        payloads[grandparent] = replace(
            payloads[grandparent], visibility=visibility_for_class(class_idx, len(classes))
        )
    else:
        payloads[sibling] = replace(payloads[sibling], font_size=band_value)
    payloads[target] = replace(payloads[target], label=classes[class_idx])

    tree = AttributedTree(parents, payloads)
    return Page(tree=tree, region=REGION, page_id=page_id), target


def generate(
    spec: SynthSpec,
    out_dir: str | Path,
    ratios: Sequence[float] = (0.64, 0.20, 0.16),
) -> list[ManifestEntry]:
    """Write one snapshot file per page plus a manifest with splits.

    Pages alternate classes, and splits are contiguous slices sized by
    largest remainder, so every split keeps the exact class balance that
    the chance-level acceptance thresholds rely on (pages are generated
    independently; slicing leaks nothing).  Writes <out_dir>/manifest.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    counts = largest_remainder(spec.pages, ratios)
    bounds = np.cumsum(counts)
    for i in range(spec.pages):
        rng = np.random.default_rng([spec.seed, i])
        n_nodes = int(rng.integers(spec.nodes_min, spec.nodes_max + 1))
        page_id = f"synthetic://{spec.task}/{i:04d}"
        page, _ = build_page(spec.task, spec.classes, i % len(spec.classes), n_nodes, rng, page_id)
        name = f"{spec.task}-{i:04d}.json"
        (out / name).write_text(serialize_snapshot(page), encoding="utf-8")
        split = "train" if i < bounds[0] else ("validation" if i < bounds[1] else "test")
        entries.append(ManifestEntry(path=name, region=REGION, split=split))
    write_manifest(entries, out / "manifest.json")
    return entries
