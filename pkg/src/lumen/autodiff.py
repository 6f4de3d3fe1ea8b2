"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything is computed in 64-bit floats so that central finite-difference
gradient checks resolve to ~1e-7 relative error. Ops record parent links
and a backward rule onto the output tensor whenever any input requires a
gradient; `backward` builds a tape (a topological ordering of the recorded
subgraph) and sweeps it once in reverse.

Calling `backward` twice on the same scalar re-derives identical gradients:
the sweep zeroes every gradient buffer in its tape before accumulating.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True

_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_C = 0.044715
MASK_NEG = -1e30  # additive attention-mask value; exp() underflows to 0


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation-only forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float64 array plus an optional same-shape gradient buffer.

    Tensor data is treated as immutable once created (gradient checks mutate
    leaf data in place deliberately; nothing else should). `grad` is filled
    by `backward` for every node it visits.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_rule")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._rule = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """Wrap an array as a non-differentiable tensor (masks, targets, ...)."""
    return Tensor(x, requires_grad=False)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], rule, op: str) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._rule = rule
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tape:
    """Topologically ordered slice of the recorded graph reaching a root.

    The ordering is built once with an iterative depth-first pass; the
    reverse sweep visits each node exactly once.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

    def run(self) -> None:
        for node in self.nodes:
            node.grad = np.zeros_like(node.data)
        self.root.grad = np.ones_like(self.root.data)
        for node in reversed(self.nodes):
            if node._rule is None:
                continue
            grads = node._rule(node.grad)
            for parent, g in zip(node._parents, grads):
                if parent.requires_grad and g is not None:
                    if parent.grad is None:
                        parent.grad = np.zeros_like(parent.data)
                    parent.grad += g


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor reachable from the scalar `loss`."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward called on a tensor with no recorded graph")
    Tape(loss).run()


# ---------------------------------------------------------------------------
# forward ops


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def rule(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _make(data, (a, b), rule, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def rule(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), rule, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def rule(g):
        return (g * c,)

    return _make(a.data * c, (a,), rule, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked operands must share their batch dimensions."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def rule(g):
        return (g @ _swap_last(b.data), _swap_last(a.data) @ g)

    return _make(data, (a, b), rule, "matmul")


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))

    def rule(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(a.data, axes), (a,), rule, "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    orig = a.shape

    def rule(g):
        return (g.reshape(orig),)

    return _make(a.data.reshape(shape), (a,), rule, "reshape")


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Contiguous row slice a[start:start+length] along axis 0."""
    if start < 0 or start + length > a.shape[0]:
        raise ValueError(f"narrow [{start}:{start + length}] out of range for {a.shape}")

    def rule(g):
        full = np.zeros_like(a.data)
        full[start : start + length] = g
        return (full,)

    return _make(a.data[start : start + length].copy(), (a,), rule, "narrow")


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ValueError("concat of zero tensors")
    sizes = [p.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def rule(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _make(data, tuple(parts), rule, "concat")


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(data, (a,), rule, "sum")


def mean_pool(a: Tensor, axis: int = 0) -> Tensor:
    """Mean over one axis (pooling over sequence/patch positions)."""
    n = a.shape[axis]
    data = a.data.mean(axis=axis)

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy() / n,)

    return _make(data, (a,), rule, "mean_pool")


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0

    def rule(g):
        return (g * keep,)

    return _make(np.where(keep, a.data, 0.0), (a,), rule, "relu")


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh form: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    x = a.data
    u = _GELU_K * (x + _GELU_C * x**3)
    t = np.tanh(u)
    data = 0.5 * x * (1.0 + t)

    def rule(g):
        du = _GELU_K * (1.0 + 3.0 * _GELU_C * x**2)
        grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du
        return (g * grad,)

    return _make(data, (a,), rule, "gelu")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((g - dot) * s,)

    return _make(s, (a,), rule, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    eps is tiny so that the output variance is within 1e-8 of 1 for
    non-degenerate rows.
    """
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data
    d = x.shape[-1]

    def rule(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        return (dx, dgain, dbias)

    del d
    return _make(data, (x, gain, bias), rule, "layer_norm")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"embedding id out of range [0, {table.shape[0]}): {ids.min()}..{ids.max()}"
        )

    def rule(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids, g)
        return (dt,)

    return _make(table.data[ids].copy(), (table,), rule, "embedding_lookup")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over rows of -log softmax(logits)[target].

    Accepts (n, C) logits with n targets, or a single (C,) row with a
    scalar target. Requires C >= 2 and targets in range.
    """
    two_d = logits.ndim == 2
    mat = logits.data if two_d else logits.data[None, :]
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.intp))
    n, c = mat.shape
    if c < 2:
        raise ValueError(f"cross_entropy needs >=2 classes, got {c}")
    if tgt.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {tgt.shape}")
    if tgt.min() < 0 or tgt.max() >= c:
        raise ValueError(f"target out of range [0, {c}): {tgt.min()}..{tgt.max()}")
    z = mat - mat.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    nll = logsumexp - z[np.arange(n), tgt]
    data = np.float64(nll.mean())
    probs = np.exp(z - logsumexp[:, None])

    def rule(g):
        d = probs.copy()
        d[np.arange(n), tgt] -= 1.0
        d *= float(g) / n
        return (d if two_d else d[0],)

    return _make(data, (logits,), rule, "cross_entropy")


# ---------------------------------------------------------------------------
# composite helpers (built from primitive ops, so they need no backward rules)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)

def masked_mean(x: Tensor, keep: np.ndarray) -> Tensor:
    """Mean of rows of x selected by the boolean/0-1 vector `keep`."""
    keep = np.asarray(keep, dtype=np.float64)
    total = keep.sum()
    if total == 0:
        raise ValueError("masked_mean over an empty selection")
    weighted = mul(x, constant(keep[:, None]))
    return scale(sum_(weighted, axis=0), 1.0 / total)


def attention_mask(causal_len: int | None = None, key_keep: np.ndarray | None = None,
                   query_len: int | None = None) -> np.ndarray | None:
    """Additive mask combining causality and key padding; None if empty."""
    mask = None
    if causal_len is not None:
        mask = np.triu(np.full((causal_len, causal_len), MASK_NEG), k=1)
    if key_keep is not None:
        key_keep = np.asarray(key_keep, dtype=bool)
        pad = np.where(key_keep, 0.0, MASK_NEG)[None, :]
        if mask is None:
            q = query_len if query_len is not None else 1
            mask = np.broadcast_to(pad, (q, key_keep.size)).copy()
        else:
            mask = mask + pad
    return mask
