"""Dense real/complex tensors with reverse-mode automatic differentiation.

Complex values are differentiated with the real-composition convention:
the real and imaginary parts are independent real parameters, and the
adjoint stored on a complex tensor is ``dL/dRe + 1j * dL/dIm``.  With that
convention a holomorphic op ``w = f(z)`` back-propagates as
``g_z = conj(f'(z)) * g_w``, and a real input simply keeps the real part
of whatever adjoint reaches it.

All arithmetic is float64 / complex128.
"""
from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ComplexTensor",
    "SingularMatrixError",
    "as_tensor",
    "no_grad",
    "backward",
    "matmul",
    "kron",
    "mat_inverse",
    "expm_minus_i",
    "concat",
    "stack",
    "softplus",
    "relu",
    "tanh",
    "sqrt",
    "exp",
    "log",
    "modulus",
    "norm",
    "complex_from",
    "real",
    "imag",
    "conj",
    "adjoint",
    "softmax_cross_entropy",
]

_state = threading.local()

# Condition number above which mat_inverse refuses to invert.
MAX_CONDITION = 1e12
HERMITIAN_TOL = 1e-10
# Target Taylor truncation error once the exponent is scaled below 0.5.
TAYLOR_TOL = 1e-16


class SingularMatrixError(ArithmeticError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""

    def __init__(self, condition: float):
        super().__init__(f"matrix is singular or ill-conditioned (condition number {condition:.3e})")
        self.condition = condition


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (thread-local)."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A dense float64 (or complex128) array that records how it was made."""

    __array_priority__ = 100
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind == "c":
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------
    @staticmethod
    def _result(data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        cls = ComplexTensor if data.dtype.kind == "c" else Tensor
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        tracked = _grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward = backward if tracked else None
        return out

    # -- basic properties -----------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_complex(self) -> bool:
        return self.data.dtype.kind == "c"

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self):
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor._result(self.data, (), None)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"{type(self).__name__}({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a), _unbroadcast(g, b)

        return Tensor._result(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g, a), _unbroadcast(-g, b)

        return Tensor._result(a.data - b.data, (a, b), bw)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return _unbroadcast(g * np.conj(b.data), a), _unbroadcast(g * np.conj(a.data), b)

        return Tensor._result(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out = a.data / b.data

        def bw(g):
            ga = g / np.conj(b.data)
            gb = -g * np.conj(out / b.data)
            return _unbroadcast(ga, a), _unbroadcast(gb, b)

        return Tensor._result(out, (a, b), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p: float):
        if not np.isscalar(p):
            raise TypeError("only scalar exponents are supported")
        a = self

        def bw(g):
            return (g * np.conj(p * a.data ** (p - 1)),)

        return Tensor._result(a.data ** p, (a,), bw)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    # -- shape ops ------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        return Tensor._result(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def transpose(self, *axes) -> "Tensor":
        """Permute axes; with no arguments swap the last two."""
        if not axes:
            axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return Tensor._result(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def broadcast_to(self, shape) -> "Tensor":
        a = self
        return Tensor._result(np.broadcast_to(self.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, a),))

    def expand_dims(self, axis: int) -> "Tensor":
        src = self.data.shape
        return Tensor._result(np.expand_dims(self.data, axis), (self,), lambda g: (g.reshape(src),))

    def __getitem__(self, idx) -> "Tensor":
        src_shape, dtype = self.data.shape, self.data.dtype

        def bw(g):
            full = np.zeros(src_shape, dtype=np.result_type(dtype, g.dtype))
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._result(self.data[idx], (self,), bw)

    # -- reductions -----------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self.data.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src),)

        return Tensor._result(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.data.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


class ComplexTensor(Tensor):
    """Complex-valued tensor; ``re`` and ``im`` are independent real parameters."""

    __slots__ = ()

    def __init__(self, re, im=None, requires_grad: bool = False):
        re = np.asarray(re)
        if im is None:
            data = re.astype(np.complex128)
        else:
            data = re.astype(np.float64) + 1j * np.asarray(im, dtype=np.float64)
        super().__init__(np.asarray(data, dtype=np.complex128), requires_grad=requires_grad)

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag

    @property
    def grad_re(self):
        return None if self.grad is None else self.grad.real

    @property
    def grad_im(self):
        return None if self.grad is None else self.grad.imag


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    """Sum ``g`` back down to the shape of ``t``; drop the imaginary part for real ``t``."""
    shape = t.data.shape
    if g.shape != shape:
        extra = g.ndim - len(shape)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if g.dtype.kind == "c" and not t.is_complex:
        g = g.real
    return g


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _toposort(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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
    """Populate ``.grad`` on every leaf that requires it.

    Gradients accumulate across calls until the leaves are zeroed.
    """
    if loss.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.is_complex:
        raise ValueError("backward() needs a real-valued loss")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if g.dtype.kind == "c" and not node.is_complex:
                g = g.real
            g = np.array(g, dtype=node.data.dtype, copy=True).reshape(node.data.shape)
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.dtype.kind == "c" and not parent.is_complex:
                pg = pg.real
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


Tensor.backward = backward


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.conj(np.swapaxes(b.data, -1, -2))
        gb = np.conj(np.swapaxes(a.data, -1, -2)) @ g
        return _unbroadcast(ga, a), _unbroadcast(gb, b)

    return Tensor._result(out, (a, b), bw)


def kron(a, b) -> Tensor:
    """Kronecker product of two matrices (leading batch axes allowed)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("kron operands must be matrices")
    ra, ca = a.shape[-2:]
    rb, cb = b.shape[-2:]
    prod = a.expand_dims(-1).expand_dims(-3) * b.expand_dims(-2).expand_dims(-4)
    batch = prod.shape[:-4]
    return prod.reshape(batch + (ra * rb, ca * cb))


def mat_inverse(a) -> Tensor:
    """Matrix inverse with ``d(A^-1) = -A^-1 dA A^-1``."""
    a = as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"mat_inverse needs square matrices, got {a.shape}")
    cond = np.max(np.linalg.cond(a.data))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(float(cond))
    inv = np.linalg.inv(a.data)

    def bw(g):
        inv_h = np.conj(np.swapaxes(inv, -1, -2))
        return (_unbroadcast(-(inv_h @ g @ inv_h), a),)

    return Tensor._result(inv, (a,), bw)


def _taylor_order(theta: float) -> int:
    m = 1
    while theta ** (m + 1) / math.factorial(m + 1) * math.exp(theta) > TAYLOR_TOL:
        m += 1
    return m


def _horner(a: np.ndarray, order: int) -> np.ndarray:
    eye = np.eye(a.shape[-1], dtype=a.dtype)
    out = np.broadcast_to(eye, a.shape).copy()
    for k in range(order, 0, -1):
        out = (a @ out) / k + eye
    return out


def _taylor(a: Tensor, order: int) -> Tensor:
    """Truncated exponential series ``sum_{k<=order} a^k / k!`` as a single op.

    The adjoint of the polynomial's Frechet derivative is read off the
    top-right block of the same polynomial applied to ``[[a^H, G], [0, a^H]]``.
    """
    d = a.shape[-1]

    def bw(g):
        ah = np.conj(np.swapaxes(a.data, -1, -2))
        block = np.zeros(a.shape[:-2] + (2 * d, 2 * d), dtype=np.complex128)
        block[..., :d, :d] = ah
        block[..., d:, d:] = ah
        block[..., :d, d:] = g
        return (_horner(block, order)[..., :d, d:],)

    return Tensor._result(_horner(a.data, order), (a,), bw)


def expm_minus_i(h, scale=1.0) -> Tensor:
    """``exp(-1j * scale * h)`` for Hermitian ``h`` by scaling and squaring.

    The exponent is halved until its 1-norm is at most 0.5, a Horner-form
    Taylor polynomial is evaluated, and the result squared back up.  Every
    step is an ordinary differentiable op, so gradients reach both ``h`` and
    ``scale``.  A batch of matrices shares one scaling exponent.
    """
    h = as_tensor(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise ValueError(f"expm_minus_i needs square matrices, got {h.shape}")
    dev = np.abs(h.data - np.conj(np.swapaxes(h.data, -1, -2))).max(initial=0.0)
    if dev > HERMITIAN_TOL * max(1.0, np.abs(h.data).max(initial=0.0)):
        raise ValueError(f"expm_minus_i input is not Hermitian (max deviation {dev:.3e})")
    scale = as_tensor(scale)
    exponent = h * (scale * -1j)

    norm1 = float(np.abs(exponent.data).sum(axis=-2).max(initial=0.0))
    squarings = max(0, math.ceil(math.log2(norm1 / 0.5))) if norm1 > 0.5 else 0
    theta = norm1 / 2 ** squarings
    order = _taylor_order(theta)
    a = exponent * (1.0 / 2 ** squarings)

    result = _taylor(a, order)
    for _ in range(squarings):
        result = matmul(result, result)
    return result


# ---------------------------------------------------------------------------
# elementwise functions
# ---------------------------------------------------------------------------

def _unary(x, fn, dfn) -> Tensor:
    x = as_tensor(x)
    out = fn(x.data)

    def bw(g):
        return (g * np.conj(dfn(x.data, out)),)

    return Tensor._result(out, (x,), bw)


def softplus(x) -> Tensor:
    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda v, o: 0.5 * (1.0 + np.tanh(0.5 * v)))


def relu(x) -> Tensor:
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda v, o: (v > 0).astype(np.float64))


def tanh(x) -> Tensor:
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)


def exp(x) -> Tensor:
    return _unary(x, np.exp, lambda v, o: o)


def log(x) -> Tensor:
    return _unary(x, np.log, lambda v, o: 1.0 / v)


def sqrt(x) -> Tensor:
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o)


NONLINEARITIES = {"softplus": softplus, "relu": relu, "tanh": tanh}


def modulus(z) -> Tensor:
    """``|z|``; the gradient at ``z == 0`` is taken as zero."""
    z = as_tensor(z)
    r = np.abs(z.data)

    def bw(g):
        safe = np.where(r > 0, r, 1.0)
        unit = np.where(r > 0, z.data / safe, 0.0)
        return (g.real * unit,)

    return Tensor._result(r, (z,), bw)


def norm(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis`` with a zero subgradient at the origin."""
    x = as_tensor(x)
    r = np.sqrt((np.abs(x.data) ** 2).sum(axis=axis, keepdims=True))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(r > 0, r, 1.0)
        return (g.real * np.where(r > 0, x.data / safe, 0.0),)

    out = r if keepdims else np.squeeze(r, axis=axis)
    return Tensor._result(out, (x,), bw)


def complex_from(re, im) -> ComplexTensor:
    re, im = as_tensor(re), as_tensor(im)
    if re.is_complex or im.is_complex:
        raise ValueError("complex_from expects real parts")

    def bw(g):
        return _unbroadcast(g.real, re), _unbroadcast(g.imag, im)

    return Tensor._result(re.data + 1j * im.data, (re, im), bw)


def real(z) -> Tensor:
    z = as_tensor(z)
    return Tensor._result(np.ascontiguousarray(z.data.real), (z,), lambda g: (g.astype(np.complex128),))


def imag(z) -> Tensor:
    z = as_tensor(z)
    return Tensor._result(np.ascontiguousarray(z.data.imag), (z,), lambda g: (1j * g,))


def conj(z) -> Tensor:
    z = as_tensor(z)
    return Tensor._result(np.conj(z.data), (z,), lambda g: (np.conj(g),))


def adjoint(z) -> Tensor:
    """Conjugate transpose over the last two axes."""
    return conj(as_tensor(z).transpose())


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        parts = np.split(g, sizes, axis=axis)
        return tuple(_unbroadcast(p, t) for p, t in zip(parts, tensors))

    return Tensor._result(out, tensors, bw)


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concat([t.expand_dims(axis) for t in tensors], axis=axis)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    ``logits`` has shape (batch, classes) or (classes,); the max is
    subtracted before exponentiating.
    """
    logits = as_tensor(logits)
    if logits.is_complex:
        raise ValueError("cross-entropy needs real logits")
    z = np.atleast_2d(logits.data)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != z.shape[0]:
        raise ValueError("labels and logits disagree on batch size")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = np.mean(logsum - shifted[rows, labels])

    def bw(g):
        p = np.exp(shifted - logsum[:, None])
        p[rows, labels] -= 1.0
        return ((g * p / z.shape[0]).reshape(logits.shape),)

    return Tensor._result(np.asarray(loss), (logits,), bw)
