"""Tape-based reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every operation of one forward pass.  Calling
:func:`backward` on a scalar node walks the tape once in reverse and returns
the adjoint of every node that influences the root.

    tape = Tape()
    w = tape.leaf([3.0])
    y = sum_(w * w)
    grads = backward(tape, y)
    grads[w]            # array([6.])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "Gradients",
    "forward",
    "backward",
    "finite_diff_gradient",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "relu",
    "exp",
    "sum_",
    "mean",
    "l2_norm_sq",
    "mse",
    "softmax_cross_entropy",
    "bce_with_logits",
    "reshape",
    "index",
    "concat",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op."""

    def __init__(self, op: str, *shapes: tuple, detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tensor:
    """A node on a tape: a float64 array plus the id of the op that made it."""

    __slots__ = ("data", "tape", "id")

    def __init__(self, data: np.ndarray, tape: "Tape", node_id: int):
        self.data = data
        self.tape = tape
        self.id = node_id

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(id={self.id}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


# backward closure: output adjoint -> adjoints for each input (None = no flow)
VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of one forward pass.

    Node ``i`` only ever takes inputs with ids ``< i``, so reverse id order is
    a valid topological order for the backward sweep.
    """

    def __init__(self):
        self.ops: list[str] = []
        self.inputs: list[tuple[int, ...]] = []
        self.vjps: list[VJP | None] = []
        self.values: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.ops)

    def _record(self, op: str, data: np.ndarray, inputs: tuple[int, ...], vjp: VJP | None) -> Tensor:
        node_id = len(self.ops)
        self.ops.append(op)
        self.inputs.append(inputs)
        self.vjps.append(vjp)
        self.values.append(data)
        return Tensor(data, self, node_id)

    def leaf(self, value) -> Tensor:
        """Register an input array (parameter, data or constant)."""
        data = np.array(value, dtype=np.float64)
        return self._record("leaf", data, (), None)

    def _lift(self, x) -> Tensor:
        if isinstance(x, Tensor):
            if x.tape is not self:
                raise ValueError("tensor belongs to a different tape")
            return x
        return self.leaf(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise TypeError("at least one operand must be a Tensor")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = tape._lift(a), tape._lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, detail="need (n,k) @ (k,p)")
    A, B = a.data, b.data

    def vjp(g):
        return g @ B.T, A.T @ g

    return tape._record("matmul", A @ B, (a.id, b.id), vjp)


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = tape._lift(a), tape._lift(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return tape._record("add", a.data + b.data, (a.id, b.id), vjp)


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = tape._lift(a), tape._lift(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return tape._record("sub", a.data - b.data, (a.id, b.id), vjp)


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting."""
    tape = _tape_of(a, b)
    a, b = tape._lift(a), tape._lift(b)
    _broadcast_shape("mul", a, b)
    A, B = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)

    return tape._record("mul", A * B, (a.id, b.id), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        return (g * c,)

    return a.tape._record("scale", a.data * c, (a.id,), vjp)


def neg(a: Tensor) -> Tensor:
    def vjp(g):
        return (-g,)

    return a.tape._record("neg", -a.data, (a.id,), vjp)


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return a.tape._record("relu", np.where(mask, a.data, 0.0), (a.id,), vjp)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return a.tape._record("exp", out, (a.id,), vjp)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    if axis is None:
        out = np.asarray(a.data.sum())

        def vjp(g):
            return (np.broadcast_to(g, shape).copy(),)
    else:
        if not -len(shape) <= axis < len(shape):
            raise ShapeError("sum", shape, detail=f"axis {axis} out of range")
        out = a.data.sum(axis=axis)

        def vjp(g):
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return a.tape._record("sum", out, (a.id,), vjp)


def mean(a: Tensor) -> Tensor:
    return scale(sum_(a), 1.0 / max(a.size, 1))


def l2_norm_sq(a: Tensor) -> Tensor:
    X = a.data

    def vjp(g):
        return (2.0 * g * X,)

    return a.tape._record("l2_norm_sq", np.asarray(np.sum(X * X)), (a.id,), vjp)


def mse(pred, target) -> Tensor:
    """Mean squared error over all elements; ``target`` gets a gradient too."""
    tape = _tape_of(pred, target)
    pred, target = tape._lift(pred), tape._lift(target)
    if pred.shape != target.shape:
        raise ShapeError("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    n = max(diff.size, 1)

    def vjp(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return tape._record("mse", np.asarray(np.sum(diff * diff) / n), (pred.id, target.id), vjp)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer class ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ShapeError("softmax_cross_entropy", logits.shape, labels.shape)
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("softmax_cross_entropy: label out of range")
    Z = logits.data
    shifted = Z - Z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    rows = np.arange(Z.shape[0])
    n = max(Z.shape[0], 1)
    out = np.asarray(-logp[rows, labels].sum() / n)

    def vjp(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / n,)

    return logits.tape._record("softmax_cross_entropy", out, (logits.id,), vjp)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of 0/1 ``targets`` given raw logits."""
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ShapeError("bce_with_logits", logits.shape, targets.shape)
    z = logits.data
    # log(1 + e^z) - t z, stable in both tails
    loss = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    n = max(z.size, 1)
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))

    def vjp(g):
        return (g * (sig - targets) / n,)

    return logits.tape._record("bce_with_logits", np.asarray(loss.sum() / n), (logits.id,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    src = a.shape

    def vjp(g):
        return (g.reshape(src),)

    return a.tape._record("reshape", out, (a.id,), vjp)


def index(a: Tensor, key) -> Tensor:
    """``a[key]`` for basic or integer-array keys; repeated rows accumulate."""
    try:
        out = a.data[key]
    except IndexError as exc:
        raise ShapeError("index", a.shape, detail=str(exc)) from None
    src = a.shape

    def vjp(g):
        grad = np.zeros(src)
        np.add.at(grad, key, g)
        return (grad,)

    return a.tape._record("index", np.array(out, dtype=np.float64), (a.id,), vjp)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not xs:
        raise ValueError("concat: empty input")
    tape = _tape_of(*xs)
    xs = [tape._lift(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(x.shape for x in xs)) from None
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return tape._record("concat", out, tuple(x.id for x in xs), vjp)


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "mse": mse,
    "softmax_cross_entropy": softmax_cross_entropy,
    "bce_with_logits": bce_with_logits,
    "scale": scale,
    "sum": sum_,
    "mean": mean,
    "l2_norm_sq": l2_norm_sq,
    "exp": exp,
    "neg": neg,
    "reshape": reshape,
    "index": index,
}


def forward(tape: Tape, op: str, *inputs, **kwargs) -> Tensor:
    """Apply the op named ``op`` to ``inputs`` and record it on ``tape``.

    Plain arrays among the inputs are registered as leaves first.
    """
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}") from None
    lifted = [tape._lift(x) if isinstance(x, (Tensor, np.ndarray, list)) else x for x in inputs]
    if op == "softmax_cross_entropy" or op == "bce_with_logits":
        # labels/targets are data, not tape nodes
        lifted[1] = inputs[1].data if isinstance(inputs[1], Tensor) else np.asarray(inputs[1])
    return fn(*lifted, **kwargs)


class Gradients(dict):
    """Node-id -> adjoint map that also accepts :class:`Tensor` keys."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.id
        return super().__getitem__(key)

    def get(self, key, default=None):
        if isinstance(key, Tensor):
            key = key.id
        return super().get(key, default)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.id
        return super().__contains__(key)


def backward(tape: Tape, root: Tensor) -> Gradients:
    """Adjoints of ``root`` w.r.t. every node it depends on.

    The tape is left untouched, so several roots of the same pass can be
    differentiated one after another.  Leaves that ``root`` does not depend
    on are reported with a zero gradient.
    """
    if root.tape is not tape:
        raise ValueError("root belongs to a different tape")
    if root.data.size != 1:
        raise ShapeError("backward", root.shape, detail="root must be scalar")
    adj: dict[int, np.ndarray] = {root.id: np.ones_like(root.data)}
    for i in range(root.id, -1, -1):
        g = adj.get(i)
        if g is None:
            continue
        vjp = tape.vjps[i]
        if vjp is None:
            continue
        for src, gi in zip(tape.inputs[i], vjp(g)):
            if gi is None:
                continue
            if src in adj:
                adj[src] = adj[src] + gi
            else:
                adj[src] = gi
    grads = Gradients(adj)
    for i in range(root.id + 1):
        if tape.ops[i] == "leaf" and i not in grads:
            grads[i] = np.zeros_like(tape.values[i])
    return grads


def finite_diff_gradient(f: Callable[[np.ndarray], float], theta, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(theta)
        flat[i] = orig - h
        fm = f(theta)
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(theta.shape)
