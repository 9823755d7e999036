"""Reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable value is a :class:`Tensor`.  Operations record their
parents and a closure mapping the output cotangent to parent cotangents;
:func:`backward` walks the recorded graph in reverse topological order.

Broadcasting follows numpy rules; gradients are summed back to the operand
shape.  Leaf tensors created with ``requires_grad=True`` accumulate into
``.grad`` across calls, so callers reset with :func:`zero_grad` before each
optimisation step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, DomainError

NORM_FLOOR = 1e-12


class Tensor:
    """A float64 array node in a computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "degenerate_rows")

    def __init__(self, data, requires_grad=False, copy=True):
        self.data = np.array(data, dtype=np.float64, copy=copy or None)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self.degenerate_rows = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn, op):
    out = Tensor(data, copy=False)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _make(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul",
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make(a.data / b.data, (a, b), bw, "div")


def scale(a, c):
    """Multiply by a Python constant; ``c`` is not differentiated."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a):
    return scale(a, -1.0)


# ---------------------------------------------------------------------------
# elementwise unary ops


def _first_bad_index(mask):
    idx = np.argwhere(mask)[0]
    return tuple(int(i) for i in idx)


def sqrt(a):
    a = as_tensor(a)
    bad = a.data < 0
    if bad.any():
        idx = _first_bad_index(bad)
        raise DomainError(f"sqrt of negative value {a.data[idx]!r} at index {idx}")
    out = np.sqrt(a.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / (2.0 * out),)

    return _make(out, (a,), bw, "sqrt")


def log(a):
    a = as_tensor(a)
    bad = a.data <= 0
    if bad.any():
        idx = _first_bad_index(bad)
        raise DomainError(f"log of non-positive value {a.data[idx]!r} at index {idx}")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def tabs(a):
    a = as_tensor(a)
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def cos(a):
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def sin(a):
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a):
    a = as_tensor(a)
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),), "relu")


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def clip(a, lo, hi):
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div,
    "sqrt": sqrt, "abs": tabs, "exp": exp, "log": log,
    "cos": cos, "sin": sin, "scale": scale,
}


def elementwise(kind, *operands):
    """Dispatch an elementwise op by name, e.g. ``elementwise("sqrt", x)``."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# structural ops


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a):
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def tsum(a, axis=None):
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), bw, "sum")


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis), 1.0 / n)


def where(cond, a, b):
    """Select ``a`` where ``cond`` holds, else ``b``; ``cond`` is a constant mask."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    data = np.where(cond, a.data, b.data)

    def bw(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.shape),
        )

    return _make(data, (a, b), bw, "where")


def logsumexp_rows(x, mask=None):
    """Row-wise ``log(sum(exp(x)))`` with max subtraction.

    With a boolean ``mask`` only selected entries enter each row's sum; a row
    with nothing selected yields ``-inf`` and passes no gradient.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"logsumexp_rows expects a 2-D tensor, got {x.shape}")
    if x.shape[1] == 0:
        raise DimensionError("logsumexp_rows over an empty row set")
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(f"mask shape {mask.shape} != input shape {x.shape}")
    xm = np.where(mask, x.data, -np.inf)
    mx = xm.max(axis=1)
    shift = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = shift + np.log(np.exp(xm - shift[:, None]).sum(axis=1))

    def bw(g):
        live = mask & np.isfinite(out)[:, None]
        with np.errstate(invalid="ignore", over="ignore"):
            p = np.where(live, np.exp(x.data - out[:, None]), 0.0)
        return (g[:, None] * p,)

    return _make(out, (x,), bw, "logsumexp_rows")


def rowwise_l2_normalize(z, floor=NORM_FLOOR):
    """Scale each row to unit L2 norm.

    Rows whose norm is below ``floor`` are divided by ``floor`` instead (so a
    zero row stays zero); how many rows took that path is stored on the
    output as ``degenerate_rows``.
    """
    z = as_tensor(z)
    if z.ndim != 2:
        raise DimensionError(f"rowwise_l2_normalize expects a 2-D tensor, got {z.shape}")
    norms = np.sqrt((z.data * z.data).sum(axis=1))
    floored = norms < floor
    denom = np.where(floored, floor, norms)
    out = z.data / denom[:, None]

    def bw(g):
        radial = (g * out).sum(axis=1, keepdims=True)
        full = (g - out * radial) / denom[:, None]
        return (np.where(floored[:, None], g / floor, full),)

    result = _make(out, (z,), bw, "l2_normalize")
    result.degenerate_rows = int(floored.sum())
    return result


# ---------------------------------------------------------------------------
# graph traversal


def topological_order(root):
    """Nodes reachable from ``root``, each after all of its inputs."""
    order, seen = [], set()
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    """Populate ``.grad`` on every leaf that ``root`` depends on.

    Gradients add onto existing ``.grad`` values; call :func:`zero_grad`
    first for a fresh pass.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grad(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst_param: int
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int

    def passed(self, tol):
        return self.max_rel_error <= tol


def gradcheck(f, params, h=1e-5):
    """Compare autodiff gradients of ``f()`` with central differences.

    ``f`` is a zero-argument callable that rebuilds the graph from the
    current contents of ``params`` and returns a scalar tensor.  Entries are
    perturbed in place and restored afterwards.
    """
    if h <= 0:
        raise ContractError("gradcheck step must be positive")
    zero_grad(params)
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_grad(params)

    worst = GradcheckReport(0.0, -1, (), 0.0, 0.0, 0)
    n = 0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            f_plus = f().item()
            p.data[idx] = orig - h
            f_minus = f().item()
            p.data[idx] = orig
            num = (f_plus - f_minus) / (2.0 * h)
            ana = float(analytic[k][idx])
            rel = abs(ana - num) / (abs(ana) + abs(num) + 1e-12)
            n += 1
            if rel > worst.max_rel_error or worst.worst_param < 0:
                worst = GradcheckReport(rel, k, idx, ana, num, 0)
    worst.n_checked = n
    return worst
