"""The two recurrent cells: a standard LSTM step and the child-sum tree step.

Both are expressed as tape primitives so gradients flow back through
whatever tree shape the caller recursed over.  A cell computes, for gates
g in {input i, activation a, output o, forget f}:

    gate = act(W_g x + U_g h_prev + b_g)

where the child-sum variant feeds the summed child hidden states to i, a
and o, and one forget gate per child modulates that child's memory cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Param, Tape

GATES = ("i", "a", "o", "f")
DEFAULT_HIDDEN = 150


@dataclass
class LstmParams:
    """Per-gate weight matrices and biases for one LSTM kernel."""

    W_i: Param
    U_i: Param
    b_i: Param
    W_a: Param
    U_a: Param
    b_a: Param
    W_o: Param
    U_o: Param
    b_o: Param
    W_f: Param
    U_f: Param
    b_f: Param

    @property
    def hidden(self) -> int:
        return self.b_i.value.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.value.shape[1]

    def params(self) -> list[Param]:
        return [getattr(self, f"{kind}_{g}") for g in GATES for kind in ("W", "U", "b")]

    def gate(self, g: str) -> tuple[Param, Param, Param]:
        return getattr(self, f"W_{g}"), getattr(self, f"U_{g}"), getattr(self, f"b_{g}")


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_lstm_params(
    name: str,
    input_dim: int,
    hidden: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
) -> LstmParams:
    """Glorot-uniform W and U; zero biases except the forget gate's."""
    fields = {}
    for g in GATES:
        fields[f"W_{g}"] = Param(f"{name}.W_{g}", glorot(rng, hidden, input_dim))
        fields[f"U_{g}"] = Param(f"{name}.U_{g}", glorot(rng, hidden, hidden))
        bias = np.full(hidden, forget_bias) if g == "f" else np.zeros(hidden)
        fields[f"b_{g}"] = Param(f"{name}.b_{g}", bias)
    return LstmParams(**fields)


@dataclass(frozen=True)
class CellState:
    """Tape handles for one node's hidden state and memory cell."""

    h: int
    c: int


def zero_state(tape: Tape, hidden: int) -> CellState:
    z = tape.constant(np.zeros(hidden))
    return CellState(h=z, c=z)


def _gate(tape: Tape, prm: LstmParams, g: str, x: int, h_prev: int, act: str) -> int:
    W, U, b = prm.gate(g)
    pre = tape.apply("add", tape.apply("matvec", tape.param(W), x),
                     tape.apply("matvec", tape.param(U), h_prev))
    return tape.apply(act, tape.apply("add", pre, tape.param(b)))


def lstm_step(tape: Tape, x: int, prev: CellState, prm: LstmParams) -> CellState:
    """One step of the sequential LSTM.

    i = s(W_i x + U_i h + b_i);  a = tanh(...);  o = s(...);  f = s(...);
    c = i * a + f * c_prev;  h = o * tanh(c).
    """
    i = _gate(tape, prm, "i", x, prev.h, "sigmoid")
    a = _gate(tape, prm, "a", x, prev.h, "tanh")
    o = _gate(tape, prm, "o", x, prev.h, "sigmoid")
    f = _gate(tape, prm, "f", x, prev.h, "sigmoid")
    c = tape.apply("add", tape.apply("mul", i, a), tape.apply("mul", f, prev.c))
    h = tape.apply("mul", o, tape.apply("tanh", c))
    return CellState(h=h, c=c)


def child_sum_step(
    tape: Tape, x: int, children: list[CellState], prm: LstmParams
) -> CellState:
    """One step of the child-sum tree LSTM.

    The i, a and o gates see the sum of the children's hidden states; each
    child gets its own forget gate over that child's hidden state, and the
    memory cell accumulates every gated child cell.  With no children this
    reduces to lstm_step from a zero state; children are summed in the
    order given (ascending child index) for reproducibility.
    """
    if children:
        h_sum = tape.apply("sum_vectors", *[s.h for s in children])
    else:
        h_sum = tape.constant(np.zeros(prm.hidden))
    i = _gate(tape, prm, "i", x, h_sum, "sigmoid")
    a = _gate(tape, prm, "a", x, h_sum, "tanh")
    o = _gate(tape, prm, "o", x, h_sum, "sigmoid")
    terms = [tape.apply("mul", i, a)]
    for s in children:
        f_k = _gate(tape, prm, "f", x, s.h, "sigmoid")
        terms.append(tape.apply("mul", f_k, s.c))
    c = terms[0] if len(terms) == 1 else tape.apply("sum_vectors", *terms)
    h = tape.apply("mul", o, tape.apply("tanh", c))
    return CellState(h=h, c=c)
