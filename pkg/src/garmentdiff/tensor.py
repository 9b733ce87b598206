"""Dense numpy-backed tensors with reverse-mode automatic differentiation.

The graph is built eagerly: each operation returns a new ``Tensor`` whose
closure knows how to push a gradient to its parents. ``backward()`` on a
scalar runs one reverse topological sweep, writes gradients into leaf
tensors that ``requires_grad``, then frees the graph — differentiating
through a consumed graph raises ``GraphError``.

Runtime work uses float32; verification (finite-difference checks) uses
float64. The dtype of every result follows its inputs, so a model built
at one precision stays there.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, NumericError, ShapeError

_GRAD_ENABLED = True

# sentinel: parents of a node whose closure was released by backward()
_CONSUMED = ("<graph consumed>",)


class no_grad:
    """Context manager that disables graph construction (e.g. sampling)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A dense array plus its place in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        backward(self)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _coerce(other, self))

    def __radd__(self, other):
        return add(_coerce(other, self), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    def __rmul__(self, other):
        return mul(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, _coerce(other, self))

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return mul(self, _coerce(-1.0, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_scalar(self, p)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if self._bwd is not None:
            flags.append("graph")
        tag = ", ".join([str(self.shape)] + flags)
        return f"Tensor({tag})"


class Parameter(Tensor):
    """A named leaf tensor that collects gradients."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, {self.shape})"


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def constant(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype))


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or t._bwd is not None


def _make(data, parents, bwd) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED:
        track = False
        for p in parents:
            if p._parents is _CONSUMED:
                raise GraphError(
                    "operation on a tensor whose graph was freed by a previous backward()"
                )
            track = track or _tracks(p)
        if track:
            out._parents = parents
            out._bwd = bwd
    return out


def backward(loss: Tensor):
    """Reverse-mode sweep from a scalar; writes into leaf ``.grad``."""
    if loss.data.shape != ():
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if loss._parents is _CONSUMED:
        raise GraphError("backward() already ran on this graph; rebuild it first")
    if loss._bwd is None and not loss.requires_grad:
        raise GraphError("loss does not depend on any differentiable tensor")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        if node._parents is _CONSUMED:
            raise GraphError("graph references a tensor freed by a previous backward()")
        stack.append((node, True))
        if node._bwd is not None:
            for p in node._parents:
                if _tracks(p) and id(p) not in visited:
                    stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._bwd is not None:
            for parent, pg in node._bwd(g):
                if not _tracks(parent):
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        elif node.requires_grad:
            node.grad = np.array(g) if node.grad is None else node.grad + g

    for node in topo:
        if node._bwd is not None:
            node._bwd = None
            node._parents = _CONSUMED


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return [(a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape))]

    return _make(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return [(a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape))]

    return _make(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def bwd(g):
        return [(a, _unbroadcast(g * bd, ad.shape)), (b, _unbroadcast(g * ad, bd.shape))]

    return _make(ad * bd, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def bwd(g):
        return [
            (a, _unbroadcast(g / bd, ad.shape)),
            (b, _unbroadcast(-g * ad / (bd * bd), bd.shape)),
        ]

    return _make(ad / bd, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs 2-D operands, got shapes {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    ad, bd = a.data, b.data

    def bwd(g):
        return [(a, g @ bd.T), (b, ad.T @ g)]

    return _make(ad @ bd, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got shape {a.data.shape}")

    def bwd(g):
        return [(a, g.T)]

    return _make(a.data.T.copy(), (a,), bwd)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    old = a.data.shape

    def bwd(g):
        return [(a, g.reshape(old))]

    return _make(a.data.reshape(shape), (a,), bwd)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return [(a, np.broadcast_to(g, shape))]
        gx = g if keepdims else np.expand_dims(g, axis)
        return [(a, np.broadcast_to(gx, shape))]

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, _coerce(1.0 / n, a))


def pow_scalar(a: Tensor, p: float) -> Tensor:
    ad = a.data

    def bwd(g):
        return [(a, g * p * ad ** (p - 1.0))]

    return _make(ad**p, (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    return pow_scalar(a, 0.5)


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        return [(a, g * out)]

    return _make(out, (a,), bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp may overflow for very negative inputs; the inf still yields the
    # correct limit 1/(1+inf) = 0, so just silence the warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)

    def bwd(g):
        return [(a, g * y * (1.0 - y))]

    return _make(y, (a,), bwd)


def silu(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    ad = a.data

    def bwd(g):
        return [(a, g * (s + ad * s * (1.0 - s)))]

    return _make(ad * s, (a,), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D tensor, got shape {a.data.shape}")
    if np.isnan(a.data).any():
        raise NumericError("softmax_rows input contains NaN")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return [(a, y * (g - dot))]

    return _make(y, (a,), bwd)


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    widths = {p.data.shape[1] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(widths) != 1:
        raise ShapeError(
            f"concat_rows needs 2-D tensors of equal width, got {[p.data.shape for p in parts]}"
        )
    sizes = [p.data.shape[0] for p in parts]
    offs = np.cumsum([0] + sizes)

    def bwd(g):
        return [(p, g[offs[i] : offs[i + 1]]) for i, p in enumerate(parts)]

    return _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bwd)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup (embedding); backward scatter-adds into the table."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows needs 1-D indices, got shape {idx.shape}")
    tshape = table.data.shape

    def bwd(g):
        gt = np.zeros(tshape, dtype=g.dtype)
        np.add.at(gt, idx, g)
        return [(table, gt)]

    return _make(table.data[idx], (table,), bwd)


def assert_finite(t: Tensor, what: str = "tensor"):
    if not np.isfinite(t.data).all():
        raise NumericError(f"{what} contains non-finite values")
    return t
