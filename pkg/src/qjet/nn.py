"""Parameter containers and dense layers built on :mod:`qjet.autodiff`."""
from __future__ import annotations

import math

import numpy as np

from .autodiff import NONLINEARITIES, ComplexTensor, Tensor, as_tensor, complex_from, imag, matmul, real


class Module:
    """Tracks parameters and child modules in assignment order."""

    def __init__(self):
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, (Tensor, Module)) or (
            isinstance(value, list) and value and all(isinstance(v, Module) for v in value)
        ):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, child in self._children.items():
            full = f"{prefix}{name}"
            if isinstance(child, Tensor):
                if child.requires_grad:
                    yield full, child
            elif isinstance(child, Module):
                yield from child.named_parameters(full + ".")
            else:
                for i, sub in enumerate(child):
                    yield from sub.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        # zeros rather than None: parameters the loss never reaches still get a grad
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def num_parameters(self) -> int:
        return count_parameters(self.parameters())


def count_parameters(params) -> int:
    """Real degrees of freedom; a complex entry counts twice."""
    return sum(p.size * (2 if p.is_complex else 1) for p in params)


def get_flat(params) -> np.ndarray:
    """Concatenate parameter values; complex entries are stored as (re, im) pairs."""
    chunks = [p.data.astype(np.complex128).view(np.float64) if p.is_complex else p.data for p in params]
    return np.concatenate([c.ravel() for c in chunks]) if chunks else np.zeros(0)


def set_flat(params, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != count_parameters(params):
        raise ValueError(f"parameter vector has {flat.size} entries, model needs {count_parameters(params)}")
    off = 0
    for p in params:
        n = p.size * (2 if p.is_complex else 1)
        chunk = flat[off : off + n]
        if p.is_complex:
            p.data = chunk.view(np.complex128).reshape(p.shape).copy()
        else:
            p.data = chunk.reshape(p.shape).copy()
        off += n


def _affine(x, weight, bias):
    x = as_tensor(x)
    if x.ndim == 1:
        return matmul(x.expand_dims(0), weight).reshape(weight.shape[-1]) + bias
    return matmul(x, weight) + bias


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Tensor(glorot(rng, n_in, n_out), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return _affine(x, self.weight, self.bias)


class MLP(Module):
    """affine -> nonlinearity -> affine."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng, activation: str = "softplus"):
        super().__init__()
        self.fc1 = Linear(n_in, n_hidden, rng)
        self.fc2 = Linear(n_hidden, n_out, rng)
        self.activation = activation

    def __call__(self, x):
        return self.fc2(NONLINEARITIES[self.activation](self.fc1(x)))


class ComplexLinear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        w = (glorot(rng, n_in, n_out) + 1j * glorot(rng, n_in, n_out)) / math.sqrt(2.0)
        self.weight = ComplexTensor(w, requires_grad=True)
        self.bias = ComplexTensor(np.zeros(n_out, dtype=np.complex128), requires_grad=True)

    def __call__(self, z):
        return _affine(z, self.weight, self.bias)


def split_activation(z, activation: str = "softplus"):
    """Apply a real nonlinearity to the real and imaginary parts separately."""
    act = NONLINEARITIES[activation]
    return complex_from(act(real(z)), act(imag(z)))


class ComplexMLP(Module):
    """Complex affine layers; ``n_hidden == 0`` means a single affine map."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng, activation: str = "softplus"):
        super().__init__()
        self.activation = activation
        if n_hidden:
            self.fc1 = ComplexLinear(n_in, n_hidden, rng)
            self.fc2 = ComplexLinear(n_hidden, n_out, rng)
        else:
            self.fc1 = ComplexLinear(n_in, n_out, rng)
            self.fc2 = None
        self.n_hidden = n_hidden

    def __call__(self, z):
        out = self.fc1(z)
        if self.fc2 is not None:
            out = self.fc2(split_activation(out, self.activation))
        return out
