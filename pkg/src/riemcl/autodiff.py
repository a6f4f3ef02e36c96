"""A small reverse-mode automatic differentiation engine over dense numpy arrays.

Every differentiable operation is a *primitive* registered in :data:`PRIMITIVES`
as a ``(forward, vjp)`` pair.  :func:`record` evaluates the forward rule and
links the result to its inputs; :func:`backward` walks that record in reverse
topological order and applies the vector-Jacobian products.

Example::

    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = (x * x).sum()
    grads = backward(loss)
    grads[x]            # array([2., 4.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


class Tensor:
    """A value plus its place in the computation record (a "dual")."""

    __slots__ = ("value", "op", "parents", "attrs", "requires_grad", "name")
    # make ``ndarray <op> Tensor`` dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.attrs: dict = {}
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self):
        tag = self.op or ("param" if self.requires_grad else "const")
        return f"Tensor({tag}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __add__(self, other):
        return record("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return record("sub", self, other)

    def __rsub__(self, other):
        return record("sub", other, self)

    def __mul__(self, other):
        return record("mul", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return record("div", self, other)

    def __rtruediv__(self, other):
        return record("div", other, self)

    def __matmul__(self, other):
        return record("matmul", self, other)

    def __rmatmul__(self, other):
        return record("matmul", other, self)

    def __neg__(self):
        return record("neg", self)

    def __getitem__(self, key):
        return record("slice", self, key=key)

    @property
    def T(self):
        return record("transpose", self)

    def sum(self, axis=None, keepdims=False):
        return record("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    def reshape(self, *shape):
        return record("reshape", self, shape=shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


# Each entry: forward(*values, **attrs) -> value
#             vjp(g, out, *values, **attrs) -> tuple of input cotangents
PRIMITIVES: dict[str, tuple[Callable, Callable]] = {}


def register_primitive(name: str, forward: Callable, vjp: Callable) -> None:
    PRIMITIVES[name] = (forward, vjp)


def _binary(fwd, vjp):
    def checked(a, b):
        _check_broadcast(a, b)
        return fwd(a, b)

    return checked, vjp


register_primitive(
    "add",
    *_binary(
        np.add,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    ),
)
register_primitive(
    "sub",
    *_binary(
        np.subtract,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    ),
)
register_primitive(
    "mul",
    *_binary(
        np.multiply,
        lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
    ),
)
register_primitive(
    "div",
    *_binary(
        np.divide,
        lambda g, out, a, b: (
            _unbroadcast(g / b, a.shape),
            _unbroadcast(-g * a / (b * b), b.shape),
        ),
    ),
)
register_primitive("neg", np.negative, lambda g, out, a: (-g,))


def _matmul_fwd(a, b):
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def _matmul_vjp(g, out, a, b):
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


register_primitive("matmul", _matmul_fwd, _matmul_vjp)


def _concat_fwd(*vals, axis=-1):
    return np.concatenate(vals, axis=axis)


def _concat_vjp(g, out, *vals, axis=-1):
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tuple(np.split(g, sizes, axis=axis))


register_primitive("concat", _concat_fwd, _concat_vjp)


def _slice_vjp(g, out, a, key):
    full = np.zeros_like(a)
    np.add.at(full, key, g)
    return (full,)


register_primitive("slice", lambda a, key: a[key], _slice_vjp)


def _sum_vjp(g, out, a, axis=None, keepdims=False):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


register_primitive("sum", lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims), _sum_vjp)
register_primitive("transpose", np.transpose, lambda g, out, a: (g.T,))
register_primitive("reshape", lambda a, shape: a.reshape(shape), lambda g, out, a, shape: (g.reshape(a.shape),))

register_primitive("exp", np.exp, lambda g, out, a: (g * out,))
register_primitive("log", np.log, lambda g, out, a: (g / a,))
register_primitive("sqrt", np.sqrt, lambda g, out, a: (g / (2.0 * out),))
register_primitive("square", np.square, lambda g, out, a: (2.0 * g * a,))
register_primitive("abs", np.abs, lambda g, out, a: (g * np.sign(a),))
register_primitive("cosh", np.cosh, lambda g, out, a: (g * np.sinh(a),))
register_primitive("sinh", np.sinh, lambda g, out, a: (g * np.cosh(a),))
register_primitive("cos", np.cos, lambda g, out, a: (-g * np.sin(a),))
register_primitive("sin", np.sin, lambda g, out, a: (g * np.cos(a),))
register_primitive("arccos", np.arccos, lambda g, out, a: (-g / np.sqrt(1.0 - a * a),))
register_primitive("arcosh", np.arccosh, lambda g, out, a: (g / np.sqrt(a * a - 1.0),))
register_primitive("tanh", np.tanh, lambda g, out, a: (g * (1.0 - out * out),))
register_primitive(
    "leaky_relu",
    lambda a, slope=LEAKY_SLOPE: np.where(a > 0, a, slope * a),
    lambda g, out, a, slope=LEAKY_SLOPE: (np.where(a > 0, g, slope * g),),
)


def _clamp_fwd(a, lo=None, hi=None):
    return np.clip(a, -np.inf if lo is None else lo, np.inf if hi is None else hi)


def _clamp_vjp(g, out, a, lo=None, hi=None):
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a >= lo
    if hi is not None:
        inside &= a <= hi
    return (np.where(inside, g, 0.0),)


register_primitive("clamp", _clamp_fwd, _clamp_vjp)


def _softmax_fwd(a, axis=-1, mask=None):
    z = a if mask is None else np.where(mask, a, -np.inf)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _softmax_vjp(g, out, a, axis=-1, mask=None):
    return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)


register_primitive("softmax", _softmax_fwd, _softmax_vjp)

# Elementwise select with a constant boolean condition; gradient is routed to
# the chosen branch only.
register_primitive(
    "where",
    lambda a, b, cond: np.where(cond, a, b),
    lambda g, out, a, b, cond: (
        _unbroadcast(np.where(cond, g, 0.0), a.shape),
        _unbroadcast(np.where(cond, 0.0, g), b.shape),
    ),
)


def record(op: str, *inputs, **attrs) -> Tensor:
    """Evaluate primitive ``op`` on ``inputs`` and link the result into the record."""
    try:
        forward, _ = PRIMITIVES[op]
    except KeyError:
        raise KeyError(f"unknown primitive {op!r}") from None
    parents = tuple(as_tensor(x) for x in inputs)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = forward(*(p.value for p in parents), **attrs)
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.op = op
        out.parents = parents
        out.attrs = attrs
        out.requires_grad = True
    return out


# Thin functional wrappers, so model code reads like numpy.
def _unary(name):
    def fn(x, **attrs):
        return record(name, x, **attrs)

    fn.__name__ = name
    return fn


exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")
square = _unary("square")
absolute = _unary("abs")
cosh = _unary("cosh")
sinh = _unary("sinh")
cos = _unary("cos")
sin = _unary("sin")
arccos = _unary("arccos")
arcosh = _unary("arcosh")
tanh = _unary("tanh")


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return record("leaky_relu", x, slope=slope)


def relu(x):
    return record("leaky_relu", x, slope=0.0)


def clamp(x, lo=None, hi=None):
    return record("clamp", x, lo=lo, hi=hi)


def softmax(x, axis=-1, mask=None):
    return record("softmax", x, axis=axis, mask=mask)


def concat(tensors, axis=-1):
    return record("concat", *tensors, axis=axis)


def where(cond, a, b):
    return record("where", a, b, cond=np.asarray(cond, dtype=bool))


def _topological(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt=None) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every leaf parameter.

    ``wrt`` optionally lists leaves that must appear in the result even if the
    loss does not depend on them (they receive zeros).
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: dict[Tensor, np.ndarray] = {}
    if loss.requires_grad:
        for node in reversed(_topological(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.op is None:
                leaves[node] = leaves.get(node, 0.0) + g
                continue
            _, vjp = PRIMITIVES[node.op]
            vals = [p.value for p in node.parents]
            cots = vjp(g, node.value, *vals, **node.attrs)
            for p, c in zip(node.parents, cots):
                if p.requires_grad:
                    c = np.asarray(c, dtype=np.float64).reshape(p.value.shape)
                    prev = grads.get(id(p))
                    grads[id(p)] = c if prev is None else prev + c
    for leaf in wrt or ():
        if leaf not in leaves:
            leaves[leaf] = np.zeros_like(leaf.value)
    return leaves


@dataclass
class AdamState:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One adaptive-moment update. Returns new parameter arrays; ``state`` is advanced."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape for {name!r}")
    state.step_count += 1
    t = state.step_count
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        out[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def failed(self) -> list[str]:
        return [k for k, e in self.errors.items() if not e < self.tol]

    @property
    def ok(self) -> bool:
        return not self.failed


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def grad_check(closure: Callable[[dict], Tensor], params: dict, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``closure(params)`` against central differences.

    ``closure`` receives a dict of :class:`Tensor` and must return a scalar
    tensor.  The error per parameter is ``max|a - n| / max(|a|, |n|)``.
    """
    leaves = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=k) for k, v in params.items()}
    grads = backward(closure(leaves), wrt=leaves.values())
    errors = {}
    for name, base in params.items():
        base = np.array(base, dtype=np.float64)
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for step in (h, -h):
                trial = {k: Tensor(np.array(v, dtype=np.float64)) for k, v in params.items()}
                bumped = base.copy()
                bumped[idx] += step
                trial[name] = Tensor(bumped)
                vals.append(float(closure(trial).value))
            numeric[idx] = (vals[0] - vals[1]) / (2 * h)
        errors[name] = relative_error(grads[leaves[name]], numeric)
    return GradCheckReport(errors=errors, tol=tol)
