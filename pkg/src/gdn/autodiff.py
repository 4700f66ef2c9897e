"""Minimal reverse-mode differentiation over numpy arrays.

Forward evaluation builds an implicit expression tape; calling
``backward(root)`` on a scalar root accumulates exact gradients into every
reachable Tensor with ``requires_grad``. Sparse matrices participate only as
constant left operands of ``spmm``. The op set is the fixed collection needed
by the training losses; shapes stay 2-D (or scalar) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

EPS = 1e-10


class AutodiffError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(self, value, requires_grad=False, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return self.value.item()

    def __float__(self) -> float:
        return self.value.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"

    # Operator sugar; scalars are promoted to constant tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, mul_scalar(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul_scalar(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    return _as_tensor(x)


as_tensor = _as_tensor


def parameter(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _tracked(value, parents, backward_fn) -> Tensor:
    needs = any(p.requires_grad or p.parents for p in parents)
    if not needs:
        return Tensor(value)
    return Tensor(value, parents=parents, backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    out = grad
    while out.ndim > len(shape):
        out = out.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and out.shape[axis] != 1:
            out = out.sum(axis=axis, keepdims=True)
    return out.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor):
    # Only same-shape, scalar, and row/column vector broadcasting is supported.
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and len(sb) == 2:
        ok_rows = sa[0] == sb[0] or sa[0] == 1 or sb[0] == 1
        ok_cols = sa[1] == sb[1] or sa[1] == 1 or sb[1] == 1
        if ok_rows and ok_cols:
            return
    raise AutodiffError(f"incompatible shapes {sa} and {sb}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    value = a.value + b.value

    def backward_fn(grad, out):
        return (_unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape))

    return _tracked(value, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    value = a.value * b.value

    def backward_fn(grad, out):
        return (
            _unbroadcast(grad * b.value, a.shape),
            _unbroadcast(grad * a.value, b.shape),
        )

    return _tracked(value, (a, b), backward_fn)


def div(a, b) -> Tensor:
    """Elementwise division. A zero denominator is an error by design: loss
    code must add its own epsilon guard (see EPS) before dividing."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    if np.any(b.value == 0):
        raise AutodiffError("division by zero denominator (missing epsilon guard?)")
    value = a.value / b.value

    def backward_fn(grad, out):
        return (
            _unbroadcast(grad / b.value, a.shape),
            _unbroadcast(-grad * a.value / (b.value ** 2), b.shape),
        )

    return _tracked(value, (a, b), backward_fn)


def mul_scalar(a, s: float) -> Tensor:
    a = _as_tensor(a)
    value = a.value * s

    def backward_fn(grad, out):
        return (grad * s,)

    return _tracked(value, (a,), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    value = a.value @ b.value

    def backward_fn(grad, out):
        return (grad @ b.value.T, a.value.T @ grad)

    return _tracked(value, (a, b), backward_fn)


def spmm(s, b) -> Tensor:
    """Sparse constant (scipy) times dense Tensor."""
    b = _as_tensor(b)
    if not sp.issparse(s):
        raise AutodiffError("spmm left operand must be a scipy sparse matrix")
    if b.value.ndim != 2 or s.shape[1] != b.shape[0]:
        raise AutodiffError(f"spmm shape mismatch {s.shape} @ {b.shape}")
    value = s @ b.value
    s_t = s.T.tocsr()

    def backward_fn(grad, out):
        return (s_t @ grad,)

    return _tracked(value, (b,), backward_fn)


def concat_cols(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[0] != b.shape[0]:
        raise AutodiffError(f"concat-columns shape mismatch {a.shape}, {b.shape}")
    value = np.concatenate([a.value, b.value], axis=1)
    split = a.shape[1]

    def backward_fn(grad, out):
        return (grad[:, :split], grad[:, split:])

    return _tracked(value, (a, b), backward_fn)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    value = np.maximum(x.value, 0.0)

    def backward_fn(grad, out):
        return (grad * (x.value > 0),)

    return _tracked(value, (x,), backward_fn)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    value = 1.0 / (1.0 + np.exp(-np.clip(x.value, -500, 500)))

    def backward_fn(grad, out):
        return (grad * out.value * (1.0 - out.value),)

    return _tracked(value, (x,), backward_fn)


def row_softmax(x) -> Tensor:
    x = _as_tensor(x)
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)

    def backward_fn(grad, out):
        s = out.value
        dot = (grad * s).sum(axis=1, keepdims=True)
        return (s * (grad - dot),)

    return _tracked(value, (x,), backward_fn)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    value = np.exp(x.value)

    def backward_fn(grad, out):
        return (grad * out.value,)

    return _tracked(value, (x,), backward_fn)


def log(x) -> Tensor:
    """Natural log. Nonpositive arguments are an error by design: guard with
    an explicit + EPS where the argument can reach zero."""
    x = _as_tensor(x)
    if np.any(x.value <= 0):
        raise AutodiffError("log of nonpositive value (missing epsilon guard?)")
    value = np.log(x.value)

    def backward_fn(grad, out):
        return (grad / x.value,)

    return _tracked(value, (x,), backward_fn)


def clip(x, lo: float, hi: float) -> Tensor:
    x = _as_tensor(x)
    value = np.clip(x.value, lo, hi)

    def backward_fn(grad, out):
        return (grad * ((x.value >= lo) & (x.value <= hi)),)

    return _tracked(value, (x,), backward_fn)


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    value = x.value.T

    def backward_fn(grad, out):
        return (grad.T,)

    return _tracked(value, (x,), backward_fn)


def trace(x) -> Tensor:
    x = _as_tensor(x)
    if x.value.ndim != 2 or x.shape[0] != x.shape[1]:
        raise AutodiffError(f"trace needs a square matrix, got {x.shape}")
    value = np.trace(x.value)
    n = x.shape[0]

    def backward_fn(grad, out):
        return (float(grad) * np.eye(n),)

    return _tracked(value, (x,), backward_fn)


def frobenius_sq(x) -> Tensor:
    x = _as_tensor(x)
    value = float((x.value ** 2).sum())

    def backward_fn(grad, out):
        return (2.0 * float(grad) * x.value,)

    return _tracked(value, (x,), backward_fn)


def reduce_sum(x) -> Tensor:
    x = _as_tensor(x)
    value = x.value.sum()

    def backward_fn(grad, out):
        return (float(grad) * np.ones_like(x.value),)

    return _tracked(value, (x,), backward_fn)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root; accumulates into .grad."""
    if root.value.shape != ():
        raise AutodiffError(f"backward root must be scalar, got shape {root.shape}")
    order = _topo_order(root)
    adjoint: dict[int, np.ndarray] = {id(root): np.asarray(1.0)}
    for node in reversed(order):
        grad = adjoint.pop(id(node), None)
        if grad is None:
            continue
        if node.requires_grad:
            node.grad = grad if node.grad is None else node.grad + grad
        if node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(grad, node)
        for p, g in zip(node.parents, parent_grads):
            if g is None:
                continue
            if id(p) in adjoint:
                adjoint[id(p)] = adjoint[id(p)] + g
            else:
                adjoint[id(p)] = g


def gradients(root: Tensor, wrt: list[Tensor]) -> list[np.ndarray]:
    """Exact reverse-mode gradients of a scalar root w.r.t. each tensor."""
    for t in wrt:
        t.grad = None
    backward(root)
    return [t.grad if t.grad is not None else np.zeros_like(t.value) for t in wrt]


def finite_difference(f, tensors: list[Tensor], step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of scalar-valued f() over tensor entries.

    f is called with no arguments and must read the tensors' current values.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.value)
        flat_v = t.value.reshape(-1)
        flat_g = g.reshape(-1)
        for idx in range(flat_v.size):
            orig = flat_v[idx]
            flat_v[idx] = orig + step
            hi = float(f())
            flat_v[idx] = orig - step
            lo = float(f())
            flat_v[idx] = orig
            flat_g[idx] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def gradient_check(f, tensors: list[Tensor], step: float = 1e-5) -> float:
    """Max relative disagreement between autodiff and finite differences."""
    root = f()
    analytic = gradients(root, tensors)
    numeric = finite_difference(f, tensors, step=step)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
        worst = max(worst, float((np.abs(a - n) / denom).max()) if a.size else 0.0)
    return worst


@dataclass
class AdamState:
    """First/second moment accumulators, one slot per parameter tensor."""

    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p.value) for p in params],
            v=[np.zeros_like(p.value) for p in params],
        )


def adam_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam update, in place on the parameter values."""
    state.step += 1
    t = state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite gradient for parameter {k} at step {t}"
            )
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * (g * g)
        m_hat = state.m[k] / (1 - beta1 ** t)
        v_hat = state.v[k] / (1 - beta2 ** t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def glorot(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    limit = np.sqrt(6.0 / (rows + cols))
    return parameter(rng.uniform(-limit, limit, size=(rows, cols)))


# ---------------------------------------------------------------------------
# Checkpoints: text header of "name rows cols" lines, blank line, then the
# tensors' float64 data little-endian in header order.
# ---------------------------------------------------------------------------

def save_checkpoint(path, named_tensors: list[tuple[str, Tensor]]) -> None:
    header_lines = []
    blobs = []
    for name, t in named_tensors:
        arr = np.atleast_2d(t.value)
        header_lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        blobs.append(arr.astype("<f8").tobytes())
    header = "\n".join(header_lines) + "\n\n"
    Path(path).write_bytes(header.encode("ascii") + b"".join(blobs))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    sep = raw.index(b"\n\n")
    header = raw[:sep].decode("ascii").splitlines()
    data = raw[sep + 2:]
    out = {}
    offset = 0
    for line in header:
        name, rows, cols = line.split()
        rows, cols = int(rows), int(cols)
        nbytes = rows * cols * 8
        arr = np.frombuffer(data[offset: offset + nbytes], dtype="<f8")
        out[name] = arr.reshape(rows, cols).copy()
        offset += nbytes
    return out
