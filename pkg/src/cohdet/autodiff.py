"""Dense-matrix reverse-mode automatic differentiation.

Small on purpose: every value is a 2-D float64 matrix, every operation
records a node on a Tape, and backward() walks the tape in reverse to
accumulate vector-Jacobian products.  The op set is exactly what the
encoder and the losses need; there is no broadcasting beyond adding a
1xC bias row to an NxC matrix.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    def __init__(self, op: str, got, want):
        super().__init__(f"{op}: got {got}, want {want}")


class NotScalarRoot(ValueError):
    pass


class Tape:
    """Ordered record of one forward pass; nodes appear after their parents."""

    def __init__(self):
        self.nodes: list[Value] = []

    def add(self, node: "Value") -> "Value":
        self.nodes.append(node)
        return node


class Value:
    """One matrix in the recorded computation.

    vjps holds (parent, fn) pairs where fn maps the output gradient to the
    parent's gradient contribution.
    """

    __slots__ = ("data", "grad", "vjps", "tape", "op")

    def __init__(self, tape: Tape, data: np.ndarray, op: str,
                 vjps: list[tuple["Value", Callable[[np.ndarray], np.ndarray]]]):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeMismatch(op, data.shape, "2-D matrix")
        self.data = data
        self.grad: np.ndarray | None = None
        self.vjps = vjps
        self.tape = tape
        self.op = op
        tape.add(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]


def leaf(tape: Tape, data: np.ndarray) -> Value:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError("leaf contains non-finite entries")
    return Value(tape, data, "leaf", [])


def constant(tape: Tape, data: np.ndarray) -> Value:
    return leaf(tape, data)


def _same_shape(op: str, a: Value, b: Value) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(op, b.shape, a.shape)


def add(a: Value, b: Value) -> Value:
    """Elementwise sum; b may also be a 1xC bias row added to every row."""
    if a.shape == b.shape:
        return Value(a.tape, a.data + b.data, "add",
                     [(a, lambda g: g), (b, lambda g: g)])
    if b.shape == (1, a.shape[1]):
        return Value(a.tape, a.data + b.data, "add",
                     [(a, lambda g: g), (b, lambda g: g.sum(axis=0, keepdims=True))])
    raise ShapeMismatch("add", b.shape, a.shape)


def sub(a: Value, b: Value) -> Value:
    _same_shape("sub", a, b)
    return Value(a.tape, a.data - b.data, "sub",
                 [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Value, b: Value) -> Value:
    _same_shape("mul", a, b)
    return Value(a.tape, a.data * b.data, "mul",
                 [(a, lambda g: g * b.data), (b, lambda g: g * a.data)])


def div(a: Value, b: Value) -> Value:
    _same_shape("div", a, b)
    return Value(a.tape, a.data / b.data, "div",
                 [(a, lambda g: g / b.data),
                  (b, lambda g: -g * a.data / (b.data * b.data))])


def scale(a: Value, c: float) -> Value:
    return Value(a.tape, a.data * c, "scale", [(a, lambda g: g * c)])


def add_scalar(a: Value, c: float) -> Value:
    return Value(a.tape, a.data + c, "add_scalar", [(a, lambda g: g)])


def matmul(a: Value, b: Value) -> Value:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", b.shape, (a.shape[1], "*"))
    return Value(a.tape, a.data @ b.data, "matmul",
                 [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)])


def transpose(a: Value) -> Value:
    return Value(a.tape, a.data.T.copy(), "transpose", [(a, lambda g: g.T)])


def dot(a: Value, b: Value) -> Value:
    """Inner product of two equal-shape row vectors, as a 1x1 matrix."""
    if a.shape[0] != 1 or a.shape != b.shape:
        raise ShapeMismatch("dot", b.shape, a.shape)
    out = np.array([[float(a.data.ravel() @ b.data.ravel())]])
    return Value(a.tape, out, "dot",
                 [(a, lambda g: g[0, 0] * b.data), (b, lambda g: g[0, 0] * a.data)])


def concat_rows(parts: Sequence[Value]) -> Value:
    if not parts:
        raise ShapeMismatch("concat_rows", "no inputs", ">= 1 input")
    cols = parts[0].shape[1]
    offsets = []
    pos = 0
    for p in parts:
        if p.shape[1] != cols:
            raise ShapeMismatch("concat_rows", p.shape, ("*", cols))
        offsets.append(pos)
        pos += p.shape[0]

    def make_vjp(off, rows):
        return lambda g: g[off:off + rows, :]

    return Value(parts[0].tape, np.vstack([p.data for p in parts]), "concat_rows",
                 [(p, make_vjp(off, p.shape[0])) for p, off in zip(parts, offsets)])


def concat_cols(parts: Sequence[Value]) -> Value:
    if not parts:
        raise ShapeMismatch("concat_cols", "no inputs", ">= 1 input")
    rows = parts[0].shape[0]
    offsets = []
    pos = 0
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeMismatch("concat_cols", p.shape, (rows, "*"))
        offsets.append(pos)
        pos += p.shape[1]

    def make_vjp(off, cols):
        return lambda g: g[:, off:off + cols]

    return Value(parts[0].tape, np.hstack([p.data for p in parts]), "concat_cols",
                 [(p, make_vjp(off, p.shape[1])) for p, off in zip(parts, offsets)])


def take_row(a: Value, i: int) -> Value:
    if not (0 <= i < a.shape[0]):
        raise ShapeMismatch("take_row", i, f"row index < {a.shape[0]}")

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.data)
        out[i, :] = g[0, :]
        return out

    return Value(a.tape, a.data[i:i + 1, :].copy(), "take_row", [(a, vjp)])


def mean_rows(a: Value) -> Value:
    n = a.shape[0]
    if n == 0:
        raise ShapeMismatch("mean_rows", a.shape, ">= 1 row")
    return Value(a.tape, a.data.mean(axis=0, keepdims=True), "mean_rows",
                 [(a, lambda g: np.repeat(g, n, axis=0) / n)])


def sum_all(a: Value) -> Value:
    return Value(a.tape, np.array([[a.data.sum()]]), "sum_all",
                 [(a, lambda g: np.full_like(a.data, g[0, 0]))])


def mean_all(a: Value) -> Value:
    count = a.data.size
    return Value(a.tape, np.array([[a.data.mean()]]), "mean_all",
                 [(a, lambda g: np.full_like(a.data, g[0, 0] / count))])


def relu(a: Value) -> Value:
    mask = (a.data > 0).astype(np.float64)
    return Value(a.tape, a.data * mask, "relu", [(a, lambda g: g * mask)])


def sigmoid(a: Value) -> Value:
    # computed in two halves to stay stable for large |x|
    out = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.clip(a.data, 0, None))),
                   np.exp(np.clip(a.data, None, 0)) / (1.0 + np.exp(np.clip(a.data, None, 0))))
    return Value(a.tape, out, "sigmoid", [(a, lambda g: g * out * (1.0 - out))])


def tanh(a: Value) -> Value:
    out = np.tanh(a.data)
    return Value(a.tape, out, "tanh", [(a, lambda g: g * (1.0 - out * out))])


def exp(a: Value) -> Value:
    out = np.exp(a.data)
    return Value(a.tape, out, "exp", [(a, lambda g: g * out)])


def log(a: Value) -> Value:
    return Value(a.tape, np.log(a.data), "log", [(a, lambda g: g / a.data)])


def clip(a: Value, lo: float, hi: float) -> Value:
    """Clamp entries to [lo, hi]; gradient passes through only where the
    clamp is inactive."""
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return Value(a.tape, np.clip(a.data, lo, hi), "clip", [(a, lambda g: g * mask)])


def softmax_rows(a: Value) -> Value:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray) -> np.ndarray:
        inner = (g * out).sum(axis=1, keepdims=True)
        return out * (g - inner)

    return Value(a.tape, out, "softmax_rows", [(a, vjp)])


def l2_normalize_rows(a: Value, epsilon: float = 1e-12) -> Value:
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, epsilon)
    out = a.data / norms

    def vjp(g: np.ndarray) -> np.ndarray:
        inner = (g * out).sum(axis=1, keepdims=True)
        return (g - out * inner) / norms

    return Value(a.tape, out, "l2_normalize_rows", [(a, vjp)])


def backward(root: Value) -> None:
    """Reverse-topological gradient accumulation from a 1x1 root.

    Every node reachable from the root receives a summed gradient;
    identical tapes produce bitwise-identical results.
    """
    if root.shape != (1, 1):
        raise NotScalarRoot(f"root has shape {root.shape}")
    tape = root.tape
    for node in tape.nodes:
        node.grad = None
    root.grad = np.ones((1, 1))
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        for parent, vjp in node.vjps:
            contribution = vjp(node.grad)
            if parent.grad is None:
                parent.grad = contribution.copy()
            else:
                parent.grad = parent.grad + contribution


def _relu_sign_pattern(root: Value) -> list[np.ndarray]:
    return [np.sign(node.vjps[0][0].data) for node in root.tape.nodes
            if node.op == "relu"]


def _patterns_differ(p1: list[np.ndarray], p2: list[np.ndarray]) -> bool:
    if len(p1) != len(p2):
        return True
    return any(x.shape != y.shape or not np.array_equal(x, y)
               for x, y in zip(p1, p2))


def finite_difference_check(
    f: Callable[[dict[str, Value]], Value],
    params: dict[str, np.ndarray],
    epsilon: float = 1e-5,
    max_coords_per_tensor: int = 32,
    seed: int = 0,
) -> float:
    """Compare analytic gradients of f against central finite differences.

    f receives fresh leaves (one per params entry, sharing a tape) and must
    return a 1x1 Value.  Large tensors are probed at up to
    max_coords_per_tensor seeded random coordinates.  Coordinates whose
    probe interval crosses a ReLU kink (the pre-activation changes sign
    between the two evaluations, which covers probing exactly at 0) are
    skipped.  Returns the max of |analytic - numeric| / max(1, |analytic|,
    |numeric|) over all probed coordinates.
    """
    rng = np.random.default_rng(seed)

    def evaluate(arrays: dict[str, np.ndarray]) -> tuple[float, list[np.ndarray]]:
        tape = Tape()
        root = f({k: leaf(tape, v) for k, v in arrays.items()})
        if root.shape != (1, 1):
            raise NotScalarRoot(f"f returned shape {root.shape}")
        return float(root.data[0, 0]), _relu_sign_pattern(root)

    tape = Tape()
    leaves = {k: leaf(tape, v) for k, v in params.items()}
    root = f(leaves)
    backward(root)
    analytic = {k: (leaves[k].grad if leaves[k].grad is not None
                    else np.zeros_like(leaves[k].data))
                for k in params}

    worst = 0.0
    for name in sorted(params):
        arr = params[name]
        total = arr.size
        if total <= max_coords_per_tensor:
            coords = np.arange(total)
        else:
            coords = rng.choice(total, size=max_coords_per_tensor, replace=False)
        for flat in sorted(int(c) for c in coords):
            idx = np.unravel_index(flat, arr.shape)
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += epsilon
            minus[name][idx] -= epsilon
            f_plus, pat_plus = evaluate(plus)
            f_minus, pat_minus = evaluate(minus)
            if _patterns_differ(pat_plus, pat_minus):
                continue
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = float(analytic[name][idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
