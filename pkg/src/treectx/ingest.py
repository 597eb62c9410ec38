"""Snapshot ingestion: parsing, tag vocabulary, feature vectors, labels, splits.

A snapshot is a UTF-8 JSON capture of one rendered page (schema version 1):

    { "version": 1, "url": str, "region": str,
      "nodes": [ { "id": int (= array position, pre-order),
                   "parent": int (-1 for root), "tag": str,
                   "bbox": {"x","y","w","h"},
                   "num_bitmap_images": int, "num_vector_images": int,
                   "font_size": num, "font_weight": num (100-900),
                   "visibility": str, "is_active": bool,
                   "label": str (optional) } ] }

Children are inferred in ascending id order.  The manifest file is a JSON
list of {path, region, split}; the vocabulary file is newline-separated
tags.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SnapshotError
from .tree import AttributedTree, validate

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# CSS visibility options, in the order their index encodes them.
VISIBILITY = ("hidden", "visible", "collapse", "inherit", "initial", "unset")

# Class names in index order; 0 is the negative class.
CLASS_NAMES = ("negative", "name", "cart", "price", "addtocart", "mainpicture", "subjectnode")
SUBJECT_NODE_PARTS = ("name", "price", "mainpicture")

VOCAB_SIZE = 59          # distinct tags kept; everything else maps to UNK
TAG_SLOTS = VOCAB_SIZE + 1
N_SCALAR_FEATURES = 10
N_FEATURES = N_SCALAR_FEATURES + TAG_SLOTS  # 70
BBOX_SLOTS = (0, 1, 2, 3)  # x, y, w, h — the ablation mask


@dataclass(frozen=True)
class DomNode:
    """One rendered element: tag plus the attributes the feature vector uses."""

    tag: str
    bbox: tuple[float, float, float, float]  # x, y, w, h in CSS pixels
    num_bitmap_images: int = 0
    num_vector_images: int = 0
    font_size: float = 16.0
    font_weight: float = 400.0
    visibility: str = "visible"
    is_active: bool = False
    label: str | None = None


@dataclass(frozen=True)
class Page:
    """A parsed snapshot: the tree of DomNodes plus its provenance."""

    tree: AttributedTree
    region: str
    page_id: str  # the snapshot's url field


@dataclass(frozen=True)
class LabeledExample:
    page_id: str
    tree: AttributedTree
    node: int
    label: str


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    region: str
    split: str  # train | validation | test


class TagVocabulary:
    """Ordered list of up to 59 tags; anything else maps to the UNK slot."""

    def __init__(self, tags: Sequence[str]) -> None:
        tags = tuple(tags)
        if len(tags) > VOCAB_SIZE:
            raise SnapshotError(f"vocabulary holds at most {VOCAB_SIZE} tags, got {len(tags)}")
        if len(set(tags)) != len(tags):
            raise SnapshotError("vocabulary tags must be unique")
        if any(t != t.lower() for t in tags):
            raise SnapshotError("vocabulary tags must be lowercase")
        self.tags = tags
        self._index = {t: i for i, t in enumerate(tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def __eq__(self, other) -> bool:
        return isinstance(other, TagVocabulary) and self.tags == other.tags

    def slot(self, tag: str) -> int:
        """One-hot slot for a tag: its vocabulary index, or UNK (last slot)."""
        return self._index.get(tag, VOCAB_SIZE)

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tags) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "TagVocabulary":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
        return cls(lines)


def build_tag_vocab(pages: Iterable[Page]) -> TagVocabulary:
    """The most frequent tags across all nodes of the given (training) pages.

    Ties break lexicographically; at most 59 entries are kept, fewer if the
    corpus has fewer distinct tags.
    """
    counts: Counter[str] = Counter()
    n_pages = 0
    for page in pages:
        n_pages += 1
        for node in page.tree.payloads:
            counts[node.tag] += 1
    if n_pages == 0:
        raise SnapshotError("build_tag_vocab: needs at least one page")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return TagVocabulary([t for t, _ in ranked[:VOCAB_SIZE]])


# -- feature vectors ------------------------------------------------------


class Standardizer:
    """Optional zero-mean/unit-variance transform for the 10 scalar slots.

    Off by default: the models consume raw attribute values.
    """

    def __init__(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, feature_rows: np.ndarray) -> "Standardizer":
        scalars = feature_rows[:, :N_SCALAR_FEATURES]
        std = scalars.std(axis=0)
        std[std == 0.0] = 1.0
        return cls(scalars.mean(axis=0), std)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        out = vec.copy()
        out[:N_SCALAR_FEATURES] = (out[:N_SCALAR_FEATURES] - self.mean) / self.std
        return out


def fit_standardizer(pages: Iterable[Page], vocab: TagVocabulary) -> Standardizer:
    """Fit scalar-slot statistics over every node of the given (training) pages."""
    rows = [featurize(node, vocab) for page in pages for node in page.tree.payloads]
    if not rows:
        raise SnapshotError("fit_standardizer: needs at least one node")
    return Standardizer.fit(np.stack(rows))


def featurize(
    node: DomNode,
    vocab: TagVocabulary,
    mask: Sequence[int] | None = None,
    standardizer: Standardizer | None = None,
) -> np.ndarray:
    """Fixed 70-slot numeric encoding of one node's local attributes.

    Layout: [0]=x, [1]=y, [2]=w, [3]=h, [4]=bitmap count, [5]=vector count,
    [6]=font size, [7]=font weight, [8]=visibility index, [9]=is_active,
    [10..69]=tag one-hot (UNK last).  `mask` drops the named slots, e.g.
    BBOX_SLOTS yields the 66-slot ablated vector.
    """
    vec = np.zeros(N_FEATURES, dtype=np.float64)
    vec[0:4] = node.bbox
    vec[4] = node.num_bitmap_images
    vec[5] = node.num_vector_images
    vec[6] = node.font_size
    vec[7] = node.font_weight
    vec[8] = VISIBILITY.index(node.visibility)
    vec[9] = 1.0 if node.is_active else 0.0
    vec[N_SCALAR_FEATURES + vocab.slot(node.tag)] = 1.0
    if standardizer is not None:
        vec = standardizer.apply(vec)
    if mask:
        vec = np.delete(vec, list(mask))
    return vec


def feature_matrix(
    tree: AttributedTree,
    vocab: TagVocabulary,
    mask: Sequence[int] | None = None,
    standardizer: Standardizer | None = None,
) -> np.ndarray:
    """One feature row per node, in node-index order."""
    return np.stack(
        [featurize(p, vocab, mask, standardizer) for p in tree.payloads]
    )


# -- snapshot files --------------------------------------------------------


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise SnapshotError(f"{where}: missing field {key!r}")
    return mapping[key]


def _finite_number(value, field: str, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SnapshotError(f"{where}: field {field!r} must be a finite number, got {value!r}")
    return float(value)


def parse_snapshot(text: str) -> Page:
    """Parse schema-version-1 snapshot text into a validated Page."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SnapshotError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a JSON object")
    version = _require(doc, "version", "snapshot")
    if version != SCHEMA_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version!r}")
    url = _require(doc, "url", "snapshot")
    region = _require(doc, "region", "snapshot")
    raw_nodes = _require(doc, "nodes", "snapshot")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise SnapshotError("snapshot: 'nodes' must be a nonempty array")

    parents: list[int | None] = []
    payloads: list[DomNode] = []
    for pos, raw in enumerate(raw_nodes):
        where = f"node {pos}"
        node_id = _require(raw, "id", where)
        if node_id != pos:
            raise SnapshotError(f"{where}: field 'id' is {node_id}, expected array position {pos}")
        parent = _require(raw, "parent", where)
        if parent == -1:
            parents.append(None)
        elif isinstance(parent, int) and 0 <= parent < pos:
            parents.append(parent)
        else:
            raise SnapshotError(f"{where}: field 'parent' must be -1 or < id, got {parent!r}")
        tag = _require(raw, "tag", where)
        if not isinstance(tag, str) or not tag:
            raise SnapshotError(f"{where}: field 'tag' must be a nonempty string")
        bbox = _require(raw, "bbox", where)
        x = _finite_number(_require(bbox, "x", where), "bbox.x", where)
        y = _finite_number(_require(bbox, "y", where), "bbox.y", where)
        w = _finite_number(_require(bbox, "w", where), "bbox.w", where)
        h = _finite_number(_require(bbox, "h", where), "bbox.h", where)
        if w < 0 or h < 0:
            raise SnapshotError(f"{where}: field 'bbox' has negative extent (w={w}, h={h})")
        counts = []
        for field in ("num_bitmap_images", "num_vector_images"):
            c = _require(raw, field, where)
            if not isinstance(c, int) or isinstance(c, bool) or c < 0:
                raise SnapshotError(f"{where}: field {field!r} must be a count >= 0, got {c!r}")
            counts.append(c)
        font_size = _finite_number(_require(raw, "font_size", where), "font_size", where)
        font_weight = _finite_number(_require(raw, "font_weight", where), "font_weight", where)
        if not 100 <= font_weight <= 900:
            raise SnapshotError(f"{where}: field 'font_weight' must be in [100, 900], got {font_weight}")
        visibility = _require(raw, "visibility", where)
        if visibility not in VISIBILITY:
            raise SnapshotError(f"{where}: field 'visibility' has unknown value {visibility!r}")
        is_active = _require(raw, "is_active", where)
        if not isinstance(is_active, bool):
            raise SnapshotError(f"{where}: field 'is_active' must be a boolean")
        label = raw.get("label")
        if label is not None and label not in CLASS_NAMES:
            raise SnapshotError(f"{where}: field 'label' has unknown class {label!r}")
        payloads.append(
            DomNode(
                tag=tag.lower(),
                bbox=(x, y, w, h),
                num_bitmap_images=counts[0],
                num_vector_images=counts[1],
                font_size=font_size,
                font_weight=font_weight,
                visibility=visibility,
                is_active=is_active,
                label=label,
            )
        )

    tree = AttributedTree(parents, payloads)
    defects = validate(tree)
    if defects:
        raise SnapshotError("snapshot tree invalid: " + "; ".join(defects))
    return Page(tree=tree, region=region, page_id=url)


def serialize_snapshot(page: Page) -> str:
    """Inverse of parse_snapshot; field-exact round trips."""
    nodes = []
    for i, node in enumerate(page.tree.payloads):
        parent = page.tree.parents[i]
        rec = {
            "id": i,
            "parent": -1 if parent is None else parent,
            "tag": node.tag,
            "bbox": {"x": node.bbox[0], "y": node.bbox[1], "w": node.bbox[2], "h": node.bbox[3]},
            "num_bitmap_images": node.num_bitmap_images,
            "num_vector_images": node.num_vector_images,
            "font_size": node.font_size,
            "font_weight": node.font_weight,
            "visibility": node.visibility,
            "is_active": node.is_active,
        }
        if node.label is not None:
            rec["label"] = node.label
        nodes.append(rec)
    doc = {"version": SCHEMA_VERSION, "url": page.page_id, "region": page.region, "nodes": nodes}
    return json.dumps(doc, indent=1)


def load_snapshot(path: str | Path) -> Page:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SnapshotError(f"cannot read snapshot {path}: {e}") from e
    try:
        return parse_snapshot(text)
    except SnapshotError as e:
        raise SnapshotError(f"{path}: {e}") from e


# -- labels ----------------------------------------------------------------


def labeled_nodes(tree: AttributedTree) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for i, node in enumerate(tree.payloads):
        if node.label is not None:
            out.setdefault(node.label, []).append(i)
    return out


def augment_subject_node(tree: AttributedTree) -> AttributedTree:
    """Label the lowest common ancestor of the name, price and main-picture nodes.

    Raises SnapshotError when any of the three source labels is missing, so
    callers skip the page explicitly instead of passing it through silently.
    """
    by_label = labeled_nodes(tree)
    missing = [lbl for lbl in SUBJECT_NODE_PARTS if lbl not in by_label]
    if missing:
        raise SnapshotError(f"cannot place subject node: missing labels {missing}")
    anchor = tree.lca([by_label[lbl][0] for lbl in SUBJECT_NODE_PARTS])
    return tree.with_payload(anchor, replace(tree.payloads[anchor], label="subjectnode"))


def sample_negatives(page: Page, k: int, seed: int) -> list[LabeledExample]:
    """k distinct unlabeled nodes, uniformly at random under the seed.

    If fewer than k unlabeled nodes exist, takes all of them and logs the
    shortfall.
    """
    unlabeled = [i for i, n in enumerate(page.tree.payloads) if n.label is None]
    rng = np.random.default_rng(seed)
    if len(unlabeled) < k:
        log.warning(
            "page %s: wanted %d negatives, only %d unlabeled nodes available",
            page.page_id, k, len(unlabeled),
        )
        chosen = unlabeled
    else:
        chosen = [unlabeled[i] for i in rng.choice(len(unlabeled), size=k, replace=False)]
    return [LabeledExample(page.page_id, page.tree, n, "negative") for n in sorted(chosen)]


# -- dataset splits ----------------------------------------------------------

SPLITS = ("train", "validation", "test")


def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    """Integer apportionment of n items by ratios; remainders favor the largest."""
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    leftover = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split_dataset(
    entries: Sequence[tuple[str, str]],
    ratios: Sequence[float] = (0.64, 0.20, 0.16),
    seed: int = 0,
) -> list[ManifestEntry]:
    """Assign pages to train/validation/test, stratified by region.

    `entries` are (path, region) pairs.  Within each region the pages are
    shuffled under the seed and apportioned by largest remainder, so split
    proportions hold per region to within one page.  Pages are the split
    unit: no page appears in more than one split.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise SnapshotError(f"split ratios must be three values summing to 1, got {ratios}")
    by_region: dict[str, list[str]] = {}
    for path, region in entries:
        by_region.setdefault(region, []).append(path)
    rng = np.random.default_rng(seed)
    manifest = []
    for region in sorted(by_region):
        paths = sorted(by_region[region])
        perm = rng.permutation(len(paths))
        shuffled = [paths[i] for i in perm]
        counts = largest_remainder(len(paths), ratios)
        start = 0
        for split, count in zip(SPLITS, counts):
            for path in shuffled[start : start + count]:
                manifest.append(ManifestEntry(path=path, region=region, split=split))
            start += count
    return manifest


def write_manifest(manifest: Sequence[ManifestEntry], path: str | Path) -> None:
    doc = [{"path": e.path, "region": e.region, "split": e.split} for e in manifest]
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise SnapshotError(f"cannot read manifest {path}: {e}") from e
    entries = []
    for i, rec in enumerate(doc):
        for field in ("path", "region", "split"):
            if field not in rec:
                raise SnapshotError(f"manifest entry {i}: missing field {field!r}")
        if rec["split"] not in SPLITS:
            raise SnapshotError(f"manifest entry {i}: unknown split {rec['split']!r}")
        entries.append(ManifestEntry(rec["path"], rec["region"], rec["split"]))
    return entries


def load_split(
    manifest: Sequence[ManifestEntry], split: str, base_dir: str | Path = "."
) -> list[Page]:
    """Parse every snapshot of one split; paths resolve against base_dir."""
    pages = []
    base = Path(base_dir)
    for entry in manifest:
        if entry.split != split:
            continue
        p = Path(entry.path)
        pages.append(load_snapshot(p if p.is_absolute() else base / p))
    return pages
