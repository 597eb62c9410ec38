"""The four subtree classifiers and their shared softmax head.

- fc: two dense layers over the target node's own features only.
- mono-bu: child-sum recursion over the target subtree, leaf to root.
- bidir-features: the bottom-up state concatenated with a sequential LSTM
  run down the root-to-target path over raw node features.
- bidir-embeddings: as above, but the downward pass consumes each path
  node's bottom-up hidden state (its "embedding" over the whole subtree
  below it), so context from anywhere in the tree reaches the target.
  By default one kernel produces both the subtree state and the context
  embeddings; a dedicated second kernel can be opted in.

All forward passes are built on a Tape, so one backward call yields the
full gradient through the recursion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Param, Tape
from .cells import CellState, LstmParams, child_sum_step, glorot, init_lstm_params, lstm_step, zero_state
from .errors import CheckpointError, NumericError, ShapeError
from .tree import AttributedTree

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300  # saturation clamp inside the NLL


class ModelKind(str, Enum):
    FC = "fc"
    MONO_BU = "mono-bu"
    BIDIR_FEATURES = "bidir-features"
    BIDIR_EMBEDDINGS = "bidir-embeddings"


@dataclass
class ModelParams:
    """All trainable parameters of one model, keyed by stable names."""

    kind: ModelKind
    input_dim: int
    hidden: int
    n_classes: int
    head_W: Param
    head_b: Param
    fc_W: Param | None = None
    fc_b: Param | None = None
    bu: LstmParams | None = None
    td: LstmParams | None = None
    ctx: LstmParams | None = None  # dedicated context kernel, bidir-embeddings only
    init_meta: dict = field(default_factory=dict)

    @property
    def dedicated_context_kernel(self) -> bool:
        return self.ctx is not None

    @property
    def rep_width(self) -> int:
        if self.kind in (ModelKind.FC, ModelKind.MONO_BU):
            return self.hidden
        return 2 * self.hidden

    def params(self) -> list[Param]:
        out: list[Param] = []
        if self.fc_W is not None:
            out += [self.fc_W, self.fc_b]
        for kernel in (self.bu, self.td, self.ctx):
            if kernel is not None:
                out += kernel.params()
        out += [self.head_W, self.head_b]
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()


def init_model(
    kind: ModelKind | str,
    input_dim: int,
    n_classes: int,
    seed: int,
    hidden: int = 150,
    dedicated_context_kernel: bool = False,
) -> ModelParams:
    """Glorot-uniform initialization; forget-gate biases start at 1."""
    kind = ModelKind(kind)
    if dedicated_context_kernel and kind is not ModelKind.BIDIR_EMBEDDINGS:
        raise CheckpointError("dedicated context kernel is only valid for bidir-embeddings")
    rng = np.random.default_rng(seed)
    fc_W = fc_b = bu = td = ctx = None
    if kind is ModelKind.FC:
        fc_W = Param("fc.W", glorot(rng, hidden, input_dim))
        fc_b = Param("fc.b", np.zeros(hidden))
    else:
        bu = init_lstm_params("bu", input_dim, hidden, rng)
        if kind is ModelKind.BIDIR_FEATURES:
            td = init_lstm_params("td", input_dim, hidden, rng)
        elif kind is ModelKind.BIDIR_EMBEDDINGS:
            td = init_lstm_params("td", hidden, hidden, rng)
            if dedicated_context_kernel:
                ctx = init_lstm_params("ctx", input_dim, hidden, rng)
    rep = hidden if kind in (ModelKind.FC, ModelKind.MONO_BU) else 2 * hidden
    head_W = Param("head.W", glorot(rng, n_classes, rep))
    head_b = Param("head.b", np.zeros(n_classes))
    return ModelParams(
        kind=kind,
        input_dim=input_dim,
        hidden=hidden,
        n_classes=n_classes,
        head_W=head_W,
        head_b=head_b,
        fc_W=fc_W,
        fc_b=fc_b,
        bu=bu,
        td=td,
        ctx=ctx,
        init_meta={"seed": seed, "scheme": "glorot-uniform", "forget_bias": 1.0},
    )


# -- encoders ---------------------------------------------------------------


def _check_features(model: ModelParams, feats: np.ndarray) -> None:
    if feats.ndim != 2 or feats.shape[1] != model.input_dim:
        raise ShapeError(
            f"feature matrix shape {tuple(feats.shape)} does not match input_dim {model.input_dim}"
        )


def _bottom_up_over(
    tape: Tape, tree: AttributedTree, order: list[int], feats: np.ndarray, prm: LstmParams
) -> dict[int, CellState]:
    """Child-sum recursion over `order` (a pre-order list): children first.

    Iterating the list in reverse visits every child before its parent,
    because parents always precede descendants in pre-order.
    """
    states: dict[int, CellState] = {}
    for n in reversed(order):
        kids = [states[k] for k in tree.children[n] if k in states]
        x = tape.constant(feats[n])
        states[n] = child_sum_step(tape, x, kids, prm)
    return states


def encode_bottom_up(
    tape: Tape, tree: AttributedTree, node: int, feats: np.ndarray, prm: LstmParams
) -> CellState:
    """State produced on the root of the subtree at `node` (leaf-to-root)."""
    order = tree.subtree_nodes(node)
    return _bottom_up_over(tape, tree, order, feats, prm)[node]


def compute_node_embeddings(
    tape: Tape, tree: AttributedTree, feats: np.ndarray, prm: LstmParams
) -> list[CellState]:
    """One full-tree bottom-up pass; entry k equals encode_bottom_up at k."""
    states = _bottom_up_over(tape, tree, list(range(len(tree))), feats, prm)
    return [states[n] for n in range(len(tree))]


def encode_top_down_features(
    tape: Tape, tree: AttributedTree, node: int, feats: np.ndarray, prm: LstmParams
) -> int:
    """Sequential LSTM down the root-to-node path over raw features; returns h."""
    state = zero_state(tape, prm.hidden)
    for n in tree.path_from_root(node):
        state = lstm_step(tape, tape.constant(feats[n]), state, prm)
    return state.h


def encode_top_down_embeddings(
    tape: Tape,
    tree: AttributedTree,
    node: int,
    embeddings: Sequence[CellState],
    prm: LstmParams,
) -> int:
    """Sequential LSTM down the path, consuming each node's embedding h; returns h."""
    state = zero_state(tape, prm.hidden)
    for n in tree.path_from_root(node):
        state = lstm_step(tape, embeddings[n].h, state, prm)
    return state.h


def represent(
    tape: Tape, model: ModelParams, tree: AttributedTree, node: int, feats: np.ndarray
) -> int:
    """The model's representation vector for the subtree rooted at `node`.

    Widths: fc 150, mono-bu 150, bidir-features 300, bidir-embeddings 300
    (for the default hidden size).
    """
    _check_features(model, feats)
    tree.check_index(node)
    if model.kind is ModelKind.FC:
        x = tape.constant(feats[node])
        pre = tape.apply("add", tape.apply("matvec", tape.param(model.fc_W), x),
                         tape.param(model.fc_b))
        return tape.apply("tanh", pre)
    if model.kind is ModelKind.MONO_BU:
        return encode_bottom_up(tape, tree, node, feats, model.bu).h
    if model.kind is ModelKind.BIDIR_FEATURES:
        h_up = encode_bottom_up(tape, tree, node, feats, model.bu).h
        h_down = encode_top_down_features(tape, tree, node, feats, model.td)
        return tape.apply("concat", h_up, h_down)
    # bidir-embeddings: context embeddings over the full tree, then down the path
    context_kernel = model.ctx if model.ctx is not None else model.bu
    embeddings = compute_node_embeddings(tape, tree, feats, context_kernel)
    if model.ctx is not None:
        h_up = encode_bottom_up(tape, tree, node, feats, model.bu).h
    else:
        # the full-tree pass at `node` only ever saw the subtree below it
        h_up = embeddings[node].h
    h_down = encode_top_down_embeddings(tape, tree, node, embeddings, model.td)
    return tape.apply("concat", h_up, h_down)


# -- head -------------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    predicted: int
    loss: float | None = None


def classify(tape: Tape, model: ModelParams, rep: int) -> int:
    """Stable softmax over the head's logits; returns the probs handle."""
    logits = tape.apply("add", tape.apply("matvec", tape.param(model.head_W), rep),
                        tape.param(model.head_b))
    return tape.apply("softmax", logits)


def loss_nll(tape: Tape, probs: int, label: int) -> int:
    """Negative log likelihood of the true class; batch losses average this."""
    p = tape.apply("pick", probs, aux=label)
    if float(tape.value(p)) < PROB_FLOOR:
        log.warning("probability for class %d underflowed; clamping at %.0e", label, PROB_FLOOR)
    clamped = tape.apply("clamp_min", p, aux=PROB_FLOOR)
    return tape.apply("neg", tape.apply("log", clamped))


def forward_example(
    model: ModelParams,
    tree: AttributedTree,
    node: int,
    feats: np.ndarray,
    label: int | None = None,
) -> tuple[Tape, int, int | None]:
    """Fresh tape for one example; returns (tape, probs handle, loss handle)."""
    tape = Tape()
    rep = represent(tape, model, tree, node, feats)
    probs = classify(tape, model, rep)
    loss = loss_nll(tape, probs, label) if label is not None else None
    return tape, probs, loss


def predict_example(
    model: ModelParams,
    tree: AttributedTree,
    node: int,
    feats: np.ndarray,
    label: int | None = None,
) -> Prediction:
    """Forward-only evaluation; argmax ties break toward the lowest index."""
    tape, probs, loss = forward_example(model, tree, node, feats, label)
    p = tape.value(probs)
    return Prediction(
        probs=p.copy(),
        predicted=int(np.argmax(p)),
        loss=None if loss is None else float(tape.value(loss)),
    )


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_VERSION = 1


def checkpoint_dict(
    model: ModelParams,
    classes: Sequence[str],
    tag_vocab: Sequence[str],
    feature_mask: Sequence[int],
    metadata: dict | None = None,
) -> dict:
    """Versioned JSON-ready record of parameters plus everything inference needs."""
    if len(classes) != model.n_classes:
        raise CheckpointError(
            f"classes ({len(classes)}) disagree with model head ({model.n_classes})"
        )
    params = {
        p.name: {"shape": list(p.value.shape), "data": p.value.reshape(-1).tolist()}
        for p in model.params()
    }
    return {
        "version": CHECKPOINT_VERSION,
        "model_kind": model.kind.value,
        "hidden": model.hidden,
        "classes": list(classes),
        "tag_vocab": list(tag_vocab),
        "feature_mask": sorted(int(i) for i in feature_mask),
        "init": dict(model.init_meta),
        "params": params,
        "metadata": dict(metadata or {}),
    }


def model_from_checkpoint(doc: dict) -> ModelParams:
    """Rebuild a ModelParams from a checkpoint dict, validating shapes."""
    try:
        if doc["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc['version']!r}")
        kind = ModelKind(doc["model_kind"])
        hidden = int(doc["hidden"])
        n_classes = len(doc["classes"])
        stored = doc["params"]
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}") from e
    first_layer = "fc.W" if kind is ModelKind.FC else "bu.W_i"
    try:
        input_dim = int(stored[first_layer]["shape"][1])
    except (KeyError, IndexError) as e:
        raise CheckpointError(f"malformed checkpoint: cannot infer input width: {e}") from e
    dedicated = any(name.startswith("ctx.") for name in stored)
    model = init_model(
        kind, input_dim, n_classes, seed=int(doc.get("init", {}).get("seed", 0)),
        hidden=hidden, dedicated_context_kernel=dedicated,
    )
    model.init_meta = dict(doc.get("init", model.init_meta))
    expected = {p.name for p in model.params()}
    if expected != set(stored):
        raise CheckpointError(
            f"checkpoint params {sorted(stored)} do not match model {sorted(expected)}"
        )
    for p in model.params():
        rec = stored[p.name]
        arr = np.asarray(rec["data"], dtype=np.float64)
        if list(p.value.shape) != list(rec["shape"]) or arr.size != p.value.size:
            raise CheckpointError(
                f"param {p.name}: stored shape {rec['shape']} does not match {list(p.value.shape)}"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"param {p.name}: checkpoint holds non-finite values")
        p.value = arr.reshape(p.value.shape)
        p.grad = np.zeros_like(p.value)
    return model


def write_checkpoint(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def read_checkpoint(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
