"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a vector-Jacobian closure on the
output tensor; ``backward`` walks the resulting DAG in reverse topological
order and accumulates gradients on the ``requires_grad`` leaves.  Data lives
in C-contiguous float64 ndarrays, so shapes and flat row-major storage come
for free.  Tensors are never mutated by operations; only the optimizer
writes into parameter data, and only ``backward`` touches ``grad``.
"""

from __future__ import annotations

import contextlib

import numpy as np

from scmsel import backend
from scmsel.errors import NumericError, ShapeError

LAYER_NORM_EPS = 1e-5

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._vjp = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape}{tag} requires_grad={self.requires_grad}>"


def _result(data, parents, vjp) -> Tensor:
    """Wrap an op result, recording the tape edge only when it can matter."""
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / broadcast ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    return _result(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")
    return _result(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    return _result(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift with python scalars (covers neg and 1-x)."""
    return _result(scale * x.data + shift, (x,), lambda g: (scale * g,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g, y=y: ((1.0 - y * y) * g,))


def sigmoid(x: Tensor) -> Tensor:
    # stable on both tails
    y = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    return _result(y, (x,), lambda g, y=y: (y * (1.0 - y) * g,))


def dropout(x: Tensor, p: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    """Zero a fraction p of entries and rescale survivors by 1/(1-p).

    Identity in eval mode. The mask is drawn from `rng`, so callers own
    reproducibility.
    """
    if not training or p == 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.random(x.shape) >= p) / keep
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    return _result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {x.shape}")
    return _result(x.data.T, (x,), lambda g: (g.T,))


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row dot product: a (m, d), b (m, d) -> (m,)."""
    if a.shape != b.shape or a.data.ndim != 2:
        raise ShapeError(f"rowwise_dot: shapes {a.shape} and {b.shape}")
    return _result(
        (a.data * b.data).sum(axis=1),
        (a, b),
        lambda g: (g[:, None] * b.data, g[:, None] * a.data),
    )


def sum_all(x: Tensor) -> Tensor:
    return _result(
        x.data.sum(),
        (x,),
        lambda g: (np.broadcast_to(g, x.shape).copy(),),
    )


def mean_all(x: Tensor) -> Tensor:
    return affine(sum_all(x), 1.0 / x.size)


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape: tuple) -> Tensor:
    return _result(
        x.data.reshape(shape),
        (x,),
        lambda g: (g.reshape(x.shape),),
    )


def concat_last(parts: list[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    offsets = np.cumsum([p.shape[-1] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(s) for s in np.split(g, offsets, axis=-1))

    return _result(
        np.concatenate([p.data for p in parts], axis=-1), tuple(parts), vjp
    )


def stack_rows(parts: list[Tensor]) -> Tensor:
    """Stack 1-d tensors into a matrix, one per row."""

    def vjp(g):
        return tuple(g[i] for i in range(len(parts)))

    return _result(np.stack([p.data for p in parts]), tuple(parts), vjp)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def vjp(g):
        full = np.zeros(x.shape)
        full[:, start:stop] = g
        return (full,)

    return _result(np.ascontiguousarray(x.data[:, start:stop]), (x,), vjp)


def row(x: Tensor, i: int) -> Tensor:
    def vjp(g):
        full = np.zeros(x.shape)
        full[i] = g
        return (full,)

    return _result(x.data[i].copy(), (x,), vjp)


def tile_rows(v: Tensor, m: int) -> Tensor:
    """Repeat a 1-d tensor as m identical rows."""
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows: expected 1-d tensor, got shape {v.shape}")
    return _result(
        np.broadcast_to(v.data, (m, v.shape[0])).copy(),
        (v,),
        lambda g: (g.sum(axis=0),),
    )


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """x (m, n), idx (m,) ints -> (m,) with out[i] = x[i, idx[i]]."""
    idx = np.asarray(idx)
    rows = np.arange(x.shape[0])

    def vjp(g):
        full = np.zeros(x.shape)
        full[rows, idx] = g
        return (full,)

    return _result(x.data[rows, idx], (x,), vjp)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """table (V, d), ids (L,) ints -> (L, d)."""
    ids = np.asarray(ids, dtype=np.intp)

    def vjp(g):
        full = np.zeros(table.shape)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.data[ids], (table,), vjp)


# ---------------------------------------------------------------------------
# fused kernels (backend-dispatched)
# ---------------------------------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Row-stochastic softmax of a (m, n) tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: expected 2-d tensor, got shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows: NaN in input")
    y = backend.active.softmax_rows_fwd(x.data)
    return _result(y, (x,), lambda g: (backend.active.softmax_rows_bwd(y, g),))


def log_softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows: expected 2-d tensor, got shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("log_softmax_rows: NaN in input")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - logz
    probs = np.exp(out)
    return _result(
        out,
        (x,),
        lambda g: (g - probs * g.sum(axis=1, keepdims=True),),
    )


def layer_norm_residual(a: Tensor, b: Tensor, gain: Tensor, bias: Tensor,
                        eps: float = LAYER_NORM_EPS) -> Tensor:
    """Row-normalize a + b, then apply the learned gain/bias.

    a, b (m, d); gain, bias (d,). Variance is the population variance with
    eps inside the square root.
    """
    if a.shape != b.shape or a.data.ndim != 2:
        raise ShapeError(f"layer_norm_residual: operand shapes {a.shape}, {b.shape}")
    d = a.shape[1]
    if d < 2:
        raise ShapeError(f"layer_norm_residual: row width {d} < 2 is degenerate")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm_residual: gain/bias shapes {gain.shape}, {bias.shape} "
            f"do not match row width {d}"
        )
    out, xhat, inv_std = backend.active.layer_norm_fwd(
        a.data + b.data, gain.data, bias.data, eps
    )

    def vjp(g):
        dx, dgain, dbias = backend.active.layer_norm_bwd(g, xhat, inv_std, gain.data)
        return dx, dx.copy(), dgain, dbias

    return _result(out, (a, b, gain, bias), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    Loss must be scalar.  Repeated calls keep accumulating into leaf grads
    until they are zeroed; intermediate nodes use transient storage, so one
    graph can be walked more than once.
    """
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    # iterative post-order DFS
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    # grads maps node id -> [array, owned]; borrowed arrays may alias op
    # outputs or sibling slots, so fan-in accumulation copies before mutating
    grads: dict[int, list] = {id(loss): [np.ones(()), True]}
    for node in reversed(order):
        entry = grads.pop(id(node), None)
        if entry is None:
            continue
        g = entry[0]
        if node._vjp is None:
            # leaf: accumulate persistently
            if node.grad is None:
                node.grad = np.zeros(node.shape)
            node.grad += g
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad:
                continue
            slot = grads.get(id(parent))
            if slot is None:
                grads[id(parent)] = [pg, False]
            elif slot[1]:
                slot[0] += pg
            else:
                slot[0] = slot[0] + pg
                slot[1] = True
