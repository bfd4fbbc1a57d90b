"""Dense float64 tensors with reverse-mode differentiation.

The graph is built by running ordinary Python code on :class:`Tensor`
objects (define-by-run). Each primitive stores its parents and a closure
mapping the output cotangent to parent cotangents; :func:`gradients` walks
the recorded DAG once in reverse topological order.

Also provides the two optimizers used by the agent (:class:`Adam` and
:func:`gd_step`) and :func:`init_params` for MLP weights.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

DTYPE = np.float64
EPS_MMD = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a primitive."""


class NonFiniteGradientError(FloatingPointError):
    """Raised by optimizers when a gradient contains NaN or Inf."""


# Active branch recorders (see ``record_branches``).
_BRANCH_LOG: list[list[np.ndarray]] = []


@contextlib.contextmanager
def record_branches():
    """Collect the boolean branch masks of every relu/minimum evaluated inside.

    Finite-difference oracles use this to detect when a perturbation crosses
    a kink, where the one-sided derivatives disagree.
    """
    log: list[np.ndarray] = []
    _BRANCH_LOG.append(log)
    try:
        yield log
    finally:
        _BRANCH_LOG.remove(log)


def _log_branch(mask: np.ndarray) -> None:
    for log in _BRANCH_LOG:
        log.append(mask.copy())


class Tensor:
    """A float64 array that optionally records how it was computed."""

    __slots__ = ("data", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # -- basics ---------------------------------------------------------
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
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self) -> "Tensor":
        return relu(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def square(self) -> "Tensor":
        return square(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data / b.data, (a, b), backward, "div")


def minimum(a, b) -> Tensor:
    """Elementwise minimum; on exact ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes differ {a.shape} vs {b.shape}")
    take_a = a.data <= b.data
    _log_branch(take_a)

    def backward(g):
        return np.where(take_a, g, 0.0), np.where(take_a, 0.0, g)

    return _result(np.where(take_a, a.data, b.data), (a, b), backward, "minimum")


def matmul(a, b) -> Tensor:
    """Matrix product, batched over leading axes (numpy ``@`` semantics)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def bias_add(x, b) -> Tensor:
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias_add: bias {b.shape} does not match trailing axis of {x.shape}")
    out = add(x, b)
    out.op = "bias_add"
    return out


# -- elementwise unary --------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0
    _log_branch(active)
    return _result(np.where(active, x.data, 0.0), (x,), lambda g: (g * active,), "relu")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def sqrt_clamped(x, eps: float = EPS_MMD) -> Tensor:
    """``sqrt(max(x, eps))``; the gradient is zero where the clamp is active."""
    x = as_tensor(x)
    inside = x.data > eps
    y = np.sqrt(np.where(inside, x.data, eps))
    return _result(y, (x,), lambda g: (np.where(inside, 0.5 * g / y, 0.0),), "sqrt_clamped")


def sqrt_norm(x) -> Tensor:
    """Square root of a non-negative quantity, with zero gradient at 0.

    Used to turn squared distances into distances: the exact value at zero is
    kept, and the (undefined) derivative there is replaced by 0.
    """
    x = as_tensor(x)
    y = np.sqrt(np.maximum(x.data, 0.0))
    pos = y > 0

    def backward(g):
        safe = np.where(pos, y, 1.0)
        return (np.where(pos, 0.5 * g / safe, 0.0),)

    return _result(y, (x,), backward, "sqrt_norm")


# -- reductions and shape ops ------------------------------------------------

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(x.data.sum(axis=axes, keepdims=keepdims), (x,), backward, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {x.shape}")

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _result(x.data.mean(axis=axes, keepdims=keepdims), (x,), backward, "mean")


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return _result(y, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {[u.shape for u in ts]} on axis {axis}")
    splits = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _result(np.concatenate([t.data for t in ts], axis=ax), ts, backward, "concat")


# -- graph traversal -----------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def backward(output: Tensor) -> dict[int, np.ndarray]:
    """Reverse pass from a scalar; returns cotangents keyed by ``id(tensor)``."""
    if output.size != 1:
        raise ShapeError(f"gradients: output must be a scalar, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    if not output.requires_grad:
        return grads
    for node in reversed(_topo_order(output)):
        g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads


def gradients(output: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """d(output)/d(p) for each named parameter; untouched parameters get zeros."""
    cot = backward(output)
    return {
        name: np.array(cot[id(p)], dtype=DTYPE) if id(p) in cot else np.zeros_like(p.data)
        for name, p in params.items()
    }


def evaluate(fn: Callable[..., Tensor], inputs: Mapping[str, object]) -> Tensor:
    """Run the graph-building function ``fn`` on named inputs."""
    return fn(**{k: as_tensor(v) for k, v in inputs.items()})


# -- parameters and optimizers ---------------------------------------------

ParamSet = dict  # name -> Tensor (leaf, requires_grad=True)


def init_params(layer_dims: Sequence[int], rng: np.random.Generator, prefix: str = "") -> ParamSet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError(f"init_params needs at least input and output sizes, got {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer sizes must be positive, got {dims}")
    params: ParamSet = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{prefix}w{i}"] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
        params[f"{prefix}b{i}"] = Tensor(np.zeros(fan_out), requires_grad=True)
    return params


def _check_grads(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")


class Adam:
    """Adam with bias correction. Moments are keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        _check_grads(params, grads)
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.b1 * m + (1.0 - self.b1) * g
            v = self.b2 * self.v[name] + (1.0 - self.b2) * (g * g)
            self.m[name], self.v[name] = m, v
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.m):
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, t: int, arrays: Mapping[str, np.ndarray]) -> None:
        self.t = int(t)
        self.m, self.v = {}, {}
        for key, arr in arrays.items():
            kind, name = key.split("/", 1)
            (self.m if kind == "m" else self.v)[name] = np.array(arr, dtype=DTYPE)


def gd_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], step: float) -> None:
    """Plain gradient descent: p <- p - step * g."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        p.data = p.data - step * g


def copy_params(params: Mapping[str, Tensor]) -> ParamSet:
    return {k: Tensor(v.data.copy(), requires_grad=True) for k, v in params.items()}


def frozen(params: Mapping[str, Tensor]) -> ParamSet:
    """Constant views of ``params``: same values, no gradient flow."""
    return {k: Tensor(v.data) for k, v in params.items()}


def flatten_grads(grads: Mapping[str, np.ndarray], names: Iterable[str]) -> np.ndarray:
    return np.concatenate([grads[n].ravel() for n in names])
