"""Context-aware vector representations of subtrees of attributed trees.

A library + CLI that classifies web elements from DOM snapshots using
child-sum tree LSTMs, with bidirectional extensions that propagate
context from around the tree down to the subtree of interest.
"""

from .autodiff import Param, Tape, grad_check, sgd_step
from .cells import CellState, LstmParams, child_sum_step, init_lstm_params, lstm_step
from .errors import TreectxError
from .ingest import DomNode, Page, TagVocabulary, featurize, parse_snapshot, serialize_snapshot
from .models import ModelKind, ModelParams, Prediction, init_model, represent
from .tree import AttributedTree, validate

__version__ = "0.1.0"

__all__ = [
    "AttributedTree",
    "CellState",
    "DomNode",
    "LstmParams",
    "ModelKind",
    "ModelParams",
    "Page",
    "Param",
    "Prediction",
    "TagVocabulary",
    "Tape",
    "TreectxError",
    "__version__",
    "child_sum_step",
    "featurize",
    "grad_check",
    "init_lstm_params",
    "init_model",
    "lstm_step",
    "parse_snapshot",
    "represent",
    "serialize_snapshot",
    "sgd_step",
    "validate",
]
