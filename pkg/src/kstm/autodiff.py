"""Dense float64 tensors with reverse-mode differentiation and AdamW.

Every operation records its parents and a closure mapping the output
gradient to input gradients. ``backward`` topologically orders the recorded
graph from the loss and replays it in reverse, accumulating gradients
additively when a tensor feeds several consumers.
"""

from __future__ import annotations

import contextlib
import struct
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its contract."""


class DegenerateVectorError(ValueError):
    """A vector with (near) zero norm reached a cosine similarity."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Run forward computations without recording them."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "op", "_parents", "_backward")
    # make numpy defer to Tensor operators in mixed expressions
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op: str | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: Sequence[Tensor], fn: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.op = op
        out._parents = tuple(parents)
        out._backward = fn
    else:
        out.op = None
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _record(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def transpose(x: Tensor) -> Tensor:
    return _record(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), stable for large |x|."""
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    return _record(np.logaddexp(0.0, x.data), (x,), lambda g: (g * s,), "softplus")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ContractError("log: input must be strictly positive")
    return _record(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def abs_diff(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise |a - b|; the subgradient where a == b is 0."""
    if a.shape != b.shape:
        raise DimensionError(f"abs_diff: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    sign = np.sign(diff)
    return _record(np.abs(diff), (a, b), lambda g: (g * sign, -g * sign), "abs_diff")


# ---------------------------------------------------------------------------
# structural


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise DimensionError("concat: no tensors given")
    if len(parts) == 1:
        return parts[0]
    ref = parts[0].shape
    for p in parts[1:]:
        if len(p.shape) != len(ref) or any(
            p.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise DimensionError(
                f"concat: side dimensions differ: {[q.shape for q in parts]} along axis {axis}"
            )
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _record(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, bounds, axis=axis)),
        "concat",
    )


def gather_rows(x: Tensor, index) -> Tensor:
    """Rows ``x[index]``; repeated indices accumulate in the backward pass."""
    index = np.asarray(index, dtype=np.int64)

    def fn(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _record(x.data[index], (x,), fn, "gather_rows")


def _segment_starts(lengths) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise DimensionError("segments must be non-empty")
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return lengths, starts


def segment_sum(x: Tensor, lengths) -> Tensor:
    """Sum consecutive row blocks of ``x`` whose sizes are ``lengths``."""
    lengths, starts = _segment_starts(lengths)
    if lengths.sum() != x.shape[0]:
        raise DimensionError(f"segment_sum: lengths cover {lengths.sum()} rows, tensor has {x.shape[0]}")
    out = np.add.reduceat(x.data, starts, axis=0)
    return _record(out, (x,), lambda g: (np.repeat(g, lengths, axis=0),), "segment_sum")


def segment_mean(x: Tensor, lengths) -> Tensor:
    """Mean of consecutive row blocks of ``x`` whose sizes are ``lengths``."""
    lengths, starts = _segment_starts(lengths)
    if lengths.sum() != x.shape[0]:
        raise DimensionError(f"segment_mean: lengths cover {lengths.sum()} rows, tensor has {x.shape[0]}")
    inv = 1.0 / lengths[:, None]
    out = np.add.reduceat(x.data, starts, axis=0) * inv
    return _record(out, (x,), lambda g: (np.repeat(g * inv, lengths, axis=0),), "segment_mean")


def diagonal(x: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"diagonal: expected a square matrix, got {x.shape}")
    return _record(np.diagonal(x.data).copy(), (x,), lambda g: (np.diag(g),), "diagonal")


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _record(np.asarray(x.data.sum(axis=axis)), (x,), fn, "sum")


def logsumexp(x: Tensor, axis: int = 1) -> Tensor:
    """Max-shifted log-sum-exp along ``axis``."""
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    soft = e / s
    out = (np.log(s) + m).squeeze(axis)
    return _record(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


NORM_FLOOR = 1e-12


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm < 1e-12 are rejected."""
    norms = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    if np.any(norms < NORM_FLOOR):
        raise DegenerateVectorError("vector norm below 1e-12 (collapsed encoder output?)")
    y = x.data / norms

    def fn(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norms,)

    return _record(y, (x,), fn, "l2_normalize_rows")


def cosine_sim(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two 1 x d vectors as a scalar tensor."""
    if a.shape != b.shape or a.data.ndim != 2 or a.shape[0] != 1:
        raise DimensionError(f"cosine_sim: expected two 1 x d vectors, got {a.shape}, {b.shape}")
    return sum(mul(l2_normalize_rows(a), l2_normalize_rows(b)))


# ---------------------------------------------------------------------------
# reverse pass


def topological_order(root: Tensor) -> list[Tensor]:
    """Recorded tensors reachable from ``root``, every input before its consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
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
    return order


def backward(loss: Tensor) -> None:
    if loss.size != 1 or loss.data.ndim > 0 and any(d != 1 for d in loss.shape):
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """AdamW with decoupled weight decay and per-group learning rates.

    ``groups`` is a list of ``(params, lr)`` pairs. Gradients are zeroed (not
    cleared) after every step so unused parameters keep a valid zero grad.
    """

    def __init__(
        self,
        groups: Sequence[tuple[Sequence[Tensor], float]],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.groups = [(list(params), float(lr)) for params, lr in groups]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [[np.zeros_like(p.data) for p in params] for params, _ in self.groups]
        self.v = [[np.zeros_like(p.data) for p in params] for params, _ in self.groups]

    @property
    def params(self) -> list[Tensor]:
        return [p for params, _ in self.groups for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for params, _ in self.groups:
            for p in params:
                if p.grad is None:
                    raise ContractError(f"parameter {p.name or p.shape} has no gradient")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for gi, (params, lr) in enumerate(self.groups):
            for pi, p in enumerate(params):
                g = p.grad
                m = self.m[gi][pi]
                v = self.v[gi][pi]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p.data *= 1.0 - lr * self.weight_decay
                p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                p.grad = np.zeros_like(p.data)

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for gi, (params, _) in enumerate(self.groups):
            for pi, p in enumerate(params):
                label = p.name or f"g{gi}.p{pi}"
                out.append((f"adam.m.{label}", self.m[gi][pi]))
                out.append((f"adam.v.{label}", self.v[gi][pi]))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for gi, (params, _) in enumerate(self.groups):
            for pi, p in enumerate(params):
                label = p.name or f"g{gi}.p{pi}"
                for kind, store in (("m", self.m), ("v", self.v)):
                    arr = arrays[f"adam.{kind}.{label}"]
                    if arr.shape != p.shape:
                        raise DimensionError(f"optimizer moment {label}: {arr.shape} != {p.shape}")
                    store[gi][pi] = arr.copy()
        self.step_count = step_count


# ---------------------------------------------------------------------------
# checkpoint format: magic, u32 version, u32 count, then per tensor
# u32 name length, utf-8 name, u32 ndim, u32 dims..., little-endian float64 data

MAGIC = b"KSTMTNSR"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, named: Iterable[tuple[str, np.ndarray]]) -> None:
    named = list(named)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(named)))
        for name, arr in named:
            arr = np.asarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensors(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a tensor checkpoint")
    pos = 8
    version, count = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    out = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        out.append((name, arr.astype(np.float64)))
    return out


def load_into(path, params: Sequence[Tensor]) -> None:
    """Copy checkpointed values into ``params``, matching names and shapes exactly."""
    stored = load_tensors(path)
    expected = [(p.name, p.shape) for p in params]
    got = [(name, arr.shape) for name, arr in stored]
    if [n for n, _ in expected] != [n for n, _ in got]:
        raise CheckpointError(f"{path}: parameter names {[n for n, _ in got]} do not match model")
    for p, (name, arr) in zip(params, stored):
        if arr.shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, model expects {p.shape}")
    for p, (_, arr) in zip(params, stored):
        p.data = arr.copy()
