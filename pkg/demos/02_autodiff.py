"""The autodiff core on complex matrices.

Differentiate a loss through a matrix exponential and a Cayley transform,
then compare one entry against a finite difference.
"""
import numpy as np

from qjet.autodiff import ComplexTensor, Tensor, adjoint, backward, expm_minus_i, matmul, modulus
from qjet.quantum import cayley

rng = np.random.default_rng(0)
theta = ComplexTensor(0.3 * rng.normal(size=(4, 4)), 0.3 * rng.normal(size=(4, 4)), requires_grad=True)
g = Tensor(np.array(0.7), requires_grad=True)
h = rng.normal(size=(4, 4))
h = h + h.T
psi = np.eye(4)[:, :1].astype(complex)


def loss():
    u = matmul(cayley(theta), matmul(expm_minus_i(h, g), adjoint(cayley(theta))))
    amp = modulus(matmul(u, psi))
    return (amp * amp * np.arange(4.0)[:, None]).sum()   # expected "level" of the evolved state


backward(loss())
print("dL/dg (autodiff)   ", float(g.grad))
eps = 1e-6
g.data = np.array(0.7 + eps); up = float(loss().data)
g.data = np.array(0.7 - eps); down = float(loss().data)
g.data = np.array(0.7)
print("dL/dg (finite diff)", (up - down) / (2 * eps))
print("dL/dRe theta[0,1] + i dL/dIm theta[0,1] =", theta.grad[0, 1])
