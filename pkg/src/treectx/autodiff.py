"""Reverse-mode automatic differentiation over a per-example tape.

Values are 64-bit numpy arrays.  A Tape records every primitive
application in evaluation order; backward() replays the records in
reverse, accumulating adjoints, and writes gradients into the Param
leaves.  Tapes are rebuilt per example, so the recorded graph can have a
different shape for every input tree.

Tapes are single-owner: never share one across threads.  Params may be
read concurrently, but gradient accumulation needs exclusive access.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

Array = np.ndarray


class Param:
    """Trainable array plus a gradient accumulator of identical shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value) -> None:
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Param({self.name!r}, shape={self.value.shape})"


def _shape(a: Array) -> str:
    return str(tuple(a.shape))


class Tape:
    """Ordered record of primitive applications with their derivative rules.

    Handles are integer indices into the tape; every input handle precedes
    its consumers, which is what makes the single reverse sweep valid.
    """

    def __init__(self) -> None:
        self._values: list[Array] = []
        self._ops: list[tuple[str, tuple[int, ...], object]] = []
        self._param_at: dict[int, Param] = {}
        self._handle_of: dict[int, int] = {}  # id(param) -> handle

    def __len__(self) -> int:
        return len(self._values)

    def value(self, handle: int) -> Array:
        return self._values[handle]

    def _push(self, kind: str, inputs: tuple[int, ...], value: Array, aux=None) -> int:
        self._values.append(value)
        self._ops.append((kind, inputs, aux))
        return len(self._values) - 1

    def constant(self, value) -> int:
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("constant contains non-finite entries")
        return self._push("const", (), arr)

    def param(self, p: Param) -> int:
        """Register a Param leaf; repeated use returns the same handle."""
        h = self._handle_of.get(id(p))
        if h is None:
            h = self._push("param", (), p.value)
            self._param_at[h] = p
            self._handle_of[id(p)] = h
        return h

    # -- primitives -----------------------------------------------------

    def apply(self, kind: str, *inputs: int, aux=None) -> int:
        """Apply one primitive to already-recorded handles.

        Kinds: matvec, add, mul, sigmoid, tanh, neg, log, softmax,
        sum_vectors, concat, pick, sum, mean, clamp_min.  Shape
        mismatches and non-finite results are rejected.
        """
        vals = [self._values[h] for h in inputs]
        with np.errstate(all="ignore"):
            return self._apply(kind, inputs, vals, aux)

    def _apply(self, kind: str, inputs: tuple[int, ...], vals: list[Array], aux) -> int:
        if kind == "matvec":
            w, x = vals
            if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
                raise ShapeError(
                    f"matvec: matrix {_shape(w)} incompatible with vector {_shape(x)}"
                )
            out = w @ x
        elif kind in ("add", "mul"):
            a, b = vals
            if a.shape != b.shape:
                raise ShapeError(f"{kind}: shapes {_shape(a)} and {_shape(b)} differ")
            out = a + b if kind == "add" else a * b
        elif kind == "sigmoid":
            (x,) = vals
            out = 1.0 / (1.0 + np.exp(-x))
        elif kind == "tanh":
            (x,) = vals
            out = np.tanh(x)
        elif kind == "neg":
            (x,) = vals
            out = -x
        elif kind == "log":
            (x,) = vals
            out = np.log(x)
        elif kind == "softmax":
            (z,) = vals
            if z.ndim != 1:
                raise ShapeError(f"softmax: expected vector, got {_shape(z)}")
            e = np.exp(z - np.max(z))
            out = e / np.sum(e)
        elif kind == "sum_vectors":
            if not vals:
                raise ShapeError("sum_vectors: needs at least one input")
            first = vals[0].shape
            for v in vals[1:]:
                if v.shape != first:
                    raise ShapeError(
                        f"sum_vectors: shapes {_shape(vals[0])} and {_shape(v)} differ"
                    )
            # left fold in the given (canonical) order, for reproducibility
            out = vals[0].copy()
            for v in vals[1:]:
                out += v
        elif kind == "concat":
            if not vals:
                raise ShapeError("concat: needs at least one input")
            out = np.concatenate([np.atleast_1d(v) for v in vals])
        elif kind == "pick":
            (v,) = vals
            i = aux
            if v.ndim != 1:
                raise ShapeError(f"pick: expected vector, got {_shape(v)}")
            if not 0 <= i < v.shape[0]:
                raise ShapeError(f"pick: index {i} out of range for length {v.shape[0]}")
            out = np.asarray(v[i])
        elif kind == "sum":
            (v,) = vals
            out = np.asarray(np.sum(v))
        elif kind == "mean":
            (v,) = vals
            out = np.asarray(np.mean(v))
        elif kind == "clamp_min":
            (v,) = vals
            out = np.maximum(v, aux)
        else:
            raise ShapeError(f"unknown op kind {kind!r}")
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{kind}: produced a non-finite result")
        return self._push(kind, inputs, out, aux)

    # -- reverse sweep ---------------------------------------------------

    def backward(self, seed: int) -> None:
        """Accumulate d(seed)/d(param) into every Param used on this tape.

        The seed must be scalar.  Gradients are summed across all uses of
        a parameter (the same kernel applied at every tree node).
        """
        out = self._values[seed]
        if out.size != 1:
            raise ShapeError(f"backward: seed must be scalar, got shape {_shape(out)}")
        adjoint: list[Array | None] = [None] * len(self._values)
        adjoint[seed] = np.ones_like(out)

        def acc(handle: int, delta: Array) -> None:
            if adjoint[handle] is None:
                adjoint[handle] = np.zeros_like(self._values[handle])
            adjoint[handle] += delta

        for h in range(seed, -1, -1):
            g = adjoint[h]
            if g is None:
                continue
            kind, inputs, aux = self._ops[h]
            if kind == "const":
                continue
            if kind == "param":
                self._param_at[h].grad += g
                continue
            vals = [self._values[i] for i in inputs]
            out = self._values[h]
            if kind == "matvec":
                w, x = vals
                acc(inputs[0], np.outer(g, x))
                acc(inputs[1], w.T @ g)
            elif kind == "add":
                acc(inputs[0], g)
                acc(inputs[1], g)
            elif kind == "mul":
                a, b = vals
                acc(inputs[0], g * b)
                acc(inputs[1], g * a)
            elif kind == "sigmoid":
                acc(inputs[0], g * out * (1.0 - out))
            elif kind == "tanh":
                acc(inputs[0], g * (1.0 - out * out))
            elif kind == "neg":
                acc(inputs[0], -g)
            elif kind == "log":
                acc(inputs[0], g / vals[0])
            elif kind == "softmax":
                p = out
                acc(inputs[0], p * (g - np.dot(g, p)))
            elif kind == "sum_vectors":
                for i in inputs:
                    acc(i, g)
            elif kind == "concat":
                off = 0
                for i, v in zip(inputs, vals):
                    n = max(v.size, 1)
                    piece = g[off : off + n]
                    acc(i, piece.reshape(v.shape))
                    off += n
            elif kind == "pick":
                delta = np.zeros_like(vals[0])
                delta[aux] = g
                acc(inputs[0], delta)
            elif kind == "sum":
                acc(inputs[0], np.broadcast_to(g, vals[0].shape).copy())
            elif kind == "mean":
                acc(inputs[0], np.broadcast_to(g / vals[0].size, vals[0].shape).copy())
            elif kind == "clamp_min":
                acc(inputs[0], np.where(vals[0] > aux, g, 0.0))
            else:  # pragma: no cover - apply() rejects unknown kinds
                raise ShapeError(f"unknown op kind {kind!r}")


def sgd_step(params: list[Param], learning_rate: float) -> None:
    """value <- value - lr * grad for every coordinate, then zero the grads.

    Refuses the whole step (no param touched) if any gradient is
    non-finite, naming the offender.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"sgd_step: non-finite gradient in {p.name}; step refused")
    for p in params:
        p.value -= learning_rate * p.grad
        p.zero_grad()


def grad_check(f, params: list[Param], step: float = 1e-5) -> float:
    """Compare analytic gradients of a tape-built scalar with central differences.

    f is a zero-argument callable returning (Tape, scalar handle), rebuilt
    from the current parameter values on every call; the finite-difference
    probes therefore never share state with the analytic path.  Returns the
    worst relative error over every coordinate of every param, with the
    denominator max(|analytic|, |numeric|, 1e-8).
    """

    def probe(p: Param, idx: int) -> float:
        try:
            tape, out = f()
        except NumericError as e:
            raise NumericError(
                f"grad_check: non-finite value probing {p.name}[{idx}]: {e}"
            ) from e
        return float(tape.value(out))

    for p in params:
        p.zero_grad()
    tape, out = f()
    tape.backward(out)
    analytic = {id(p): p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()

    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        a_flat = analytic[id(p)].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = probe(p, idx)
            flat[idx] = orig - step
            f_minus = probe(p, idx)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(a_flat[idx] - numeric) / max(abs(a_flat[idx]), abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
