"""Dense reverse-mode automatic differentiation on 2-D float64 arrays.

Define-by-run: every op returns a new Tensor2 that remembers its parents and
a closure producing analytic input gradients. There is no global tape, so
independent training runs never share mutable state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CLAMP = 1e-12


class Tensor2:
    """2-D tensor node.

    ``value`` is always a C-contiguous float64 array of shape
    ``(rows, cols)``; entries are validated finite on construction, which
    covers every op output. ``grad`` is allocated lazily by
    :func:`backward` and only on leaves (tensors created with
    ``requires_grad=True``); interior gradients live in a per-call table.
    """

    __slots__ = ("value", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.ascontiguousarray(value, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"Tensor2 must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Tensor2 entries must be finite")
        self.value = v
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def detach(self) -> "Tensor2":
        return Tensor2(self.value.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor2(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def tensor(value, requires_grad: bool = False, name: str | None = None) -> Tensor2:
    return Tensor2(value, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor2:
    return x if isinstance(x, Tensor2) else Tensor2(np.asarray(x, dtype=np.float64))


def _node(value, parents, backward_fn) -> Tensor2:
    out = Tensor2(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------------------
# ops
#
# Backward closures receive (g, sink) and report each parent's gradient
# contribution through sink(parent, grad).


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g, sink):
        sink(a, g @ b.value.T)
        sink(b, a.value.T @ g)

    return _node(a.value @ b.value, (a, b), bw)


def hadamard(a: Tensor2, b: Tensor2) -> Tensor2:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")

    def bw(g, sink):
        sink(a, g * b.value)
        sink(b, g * a.value)

    return _node(a.value * b.value, (a, b), bw)


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def bw(g, sink):
        sink(a, g)
        sink(b, g)

    return _node(a.value + b.value, (a, b), bw)


def scale(a: Tensor2, c: float) -> Tensor2:
    """Multiply by a python constant; no gradient for ``c``."""
    a = _as_tensor(a)
    c = float(c)

    def bw(g, sink):
        sink(a, c * g)

    return _node(c * a.value, (a,), bw)


def transpose(a: Tensor2) -> Tensor2:
    a = _as_tensor(a)

    def bw(g, sink):
        sink(a, g.T)

    return _node(a.value.T, (a,), bw)


def relu(a: Tensor2) -> Tensor2:
    a = _as_tensor(a)

    def bw(g, sink):
        sink(a, g * (a.value > 0.0))

    return _node(np.maximum(a.value, 0.0), (a,), bw)


def sigmoid(a: Tensor2) -> Tensor2:
    a = _as_tensor(a)
    x = a.value
    e = np.exp(-np.abs(x))
    out_v = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    # keep saturated tails strictly inside (0, 1)
    out_v = np.clip(out_v, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))

    def bw(g, sink):
        sink(a, g * out_v * (1.0 - out_v))

    return _node(out_v, (a,), bw)


def softmax_rows(a: Tensor2) -> Tensor2:
    a = _as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_v = e / e.sum(axis=1, keepdims=True)

    def bw(g, sink):
        dot = (g * out_v).sum(axis=1, keepdims=True)
        sink(a, out_v * (g - dot))

    return _node(out_v, (a,), bw)


def diag_scale(d: Tensor2, m: Tensor2) -> Tensor2:
    """diag(d) @ m, with ``d`` a 1xN row holding the diagonal."""
    d, m = _as_tensor(d), _as_tensor(m)
    if d.rows != 1 or d.cols != m.rows:
        raise ValueError(f"diag_scale shape mismatch: {d.shape} vs {m.shape}")
    col = d.value.reshape(-1, 1)

    def bw(g, sink):
        sink(d, (g * m.value).sum(axis=1).reshape(1, -1))
        sink(m, g * col)

    return _node(col * m.value, (d, m), bw)


def select_rows(a: Tensor2, idx) -> Tensor2:
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("select_rows needs a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ValueError(f"row index out of range for {a.shape}")

    def bw(g, sink):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        sink(a, full)

    return _node(a.value[idx, :], (a,), bw)


def sum_all(a: Tensor2) -> Tensor2:
    a = _as_tensor(a)

    def bw(g, sink):
        sink(a, np.full_like(a.value, g[0, 0]))

    return _node(np.array([[a.value.sum()]]), (a,), bw)


def sum_rows(a: Tensor2) -> Tensor2:
    """Row sums as an Nx1 column."""
    a = _as_tensor(a)

    def bw(g, sink):
        sink(a, np.repeat(g, a.cols, axis=1))

    return _node(a.value.sum(axis=1, keepdims=True), (a,), bw)


def powf(a: Tensor2, p: float) -> Tensor2:
    """Elementwise power with constant exponent; entries must be positive."""
    a = _as_tensor(a)
    p = float(p)
    if np.any(a.value <= 0.0):
        raise ValueError("powf needs strictly positive entries")

    def bw(g, sink):
        sink(a, g * p * a.value ** (p - 1.0))

    return _node(a.value ** p, (a,), bw)


def binarize_st(o: Tensor2, a_ref: np.ndarray) -> Tensor2:
    """Hard threshold against a reference pattern, straight-through gradient.

    Entry (i, j) becomes 0 where ``a_ref[i, j] >= o[i, j]`` and 1 elsewhere;
    the backward pass treats the op as identity in ``o``.
    """
    o = _as_tensor(o)
    a_ref = np.asarray(a_ref, dtype=np.float64)
    if a_ref.shape != o.shape:
        raise ValueError(f"binarize shape mismatch: {o.shape} vs {a_ref.shape}")

    def bw(g, sink):
        sink(o, g)

    return _node(np.where(a_ref >= o.value, 0.0, 1.0), (o,), bw)


def cross_entropy(p: Tensor2, target_one_hot) -> Tensor2:
    """-sum(target * log(p)), p clamped at 1e-12 before the log.

    Every target row must be exactly one-hot. Works for softmax rows and
    for independent sigmoid outputs alike.
    """
    p = _as_tensor(p)
    t = np.asarray(target_one_hot, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"cross_entropy shape mismatch: {p.shape} vs {t.shape}")
    if not np.all((t == 0.0) | (t == 1.0)) or not np.all(t.sum(axis=1) == 1.0):
        raise ValueError("target rows must be one-hot")
    pc = np.maximum(p.value, CLAMP)
    loss = -(t * np.log(pc)).sum()

    def bw(g, sink):
        # flat on the clamped branch, matching what differencing sees
        sink(p, g[0, 0] * np.where(p.value > CLAMP, -t / pc, 0.0))

    return _node(np.array([[loss]]), (p,), bw)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor2) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    ``loss`` must be 1x1. Repeated calls without zeroing keep accumulating.
    """
    if not isinstance(loss, Tensor2):
        raise ValueError("backward needs a Tensor2")
    if loss.value.shape != (1, 1):
        raise ValueError(f"loss must be scalar (1x1), got {loss.shape}")
    if not loss.requires_grad:
        return

    order: list[Tensor2] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor2, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    table: dict[int, np.ndarray] = {}

    def sink(t: Tensor2, g: np.ndarray) -> None:
        if not t.requires_grad:
            return
        if t._backward is None:
            if t.grad is None:
                t.grad = np.zeros_like(t.value)
            t.grad += g
        else:
            cur = table.get(id(t))
            table[id(t)] = g if cur is None else cur + g

    sink(loss, np.ones((1, 1)))
    for node in reversed(order):
        if node._backward is None:
            continue
        g = table.pop(id(node), None)
        if g is not None:
            node._backward(g, sink)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    """sgd or adam state shared by the parameters stepped together."""

    algorithm: str
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def make_optimizer(algorithm: str = "adam", lr: float = 0.01, **kw) -> OptimizerState:
    return OptimizerState(algorithm=algorithm, lr=lr, **kw)


def optimizer_step(state: OptimizerState, params, grads=None):
    """Apply one update in place. ``grads`` defaults to each param's ``.grad``.

    Parameters with no accumulated gradient are treated as zero-gradient.
    """
    params = list(params)
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ValueError("params and grads differ in length")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.betas
    for p, g in zip(params, grads):
        if g is None:
            g = np.zeros_like(p.value)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.value.shape}")
        if state.algorithm == "sgd":
            p.value = p.value - state.lr * g
            continue
        m, v = state.moments.get(id(p), (np.zeros_like(p.value), np.zeros_like(p.value)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.moments[id(p)] = (m, v)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.value = p.value - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: dict) -> None:
    """Write named parameters as JSON with 17-significant-digit decimals.

    Values may be Tensor2 or plain arrays. Round-trips float64 bit-exactly.
    """
    lines = []
    for name in sorted(params):
        v = params[name]
        arr = v.value if isinstance(v, Tensor2) else np.asarray(v, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 1-D or 2-D")
        data = ", ".join(f"{x:.17g}" for x in arr.reshape(-1))
        lines.append(f'  {json.dumps(name)}: {{"rows": {arr.shape[0]}, '
                     f'"cols": {arr.shape[1]}, "data": [{data}]}}')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{\n" + ",\n".join(lines) + "\n}\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for name, entry in doc.items():
        try:
            arr = np.array(entry["data"], dtype=np.float64).reshape(
                int(entry["rows"]), int(entry["cols"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad checkpoint entry {name!r} ({exc})") from None
        out[name] = arr
    return out
