"""Statevector QGNN / EQGNN: qubit encoder, graph Hamiltonian, Cayley-conjugated evolution."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .autodiff import (
    ComplexTensor,
    Tensor,
    adjoint,
    as_tensor,
    complex_from,
    expm_minus_i,
    mat_inverse,
    matmul,
    modulus,
    norm,
    softmax_cross_entropy,
)
from .nn import MLP, ComplexMLP, Module

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
IDENTITY_2 = np.eye(2)

N_TERMS = 2  # coupling + transverse


class DegenerateEncodingError(ArithmeticError):
    pass


def embed_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """``I x ... x op (at site) x ... x I`` with site 0 the leftmost factor."""
    out = np.ones((1, 1))
    for i in range(n):
        out = np.kron(out, op if i == site else IDENTITY_2)
    return out


def _check_adjacency(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"edge matrix must be square, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0):
        raise ValueError("edge matrix must be symmetric")
    return a


def coupling_hamiltonian_kron(a: np.ndarray) -> np.ndarray:
    """Coupling term assembled operator by operator.

    ``(1/2) sum_{j<k} a_jk (N_j - N_k)^2`` where ``N_j = (I - Z_j)/2`` is the
    occupation operator of qubit j.
    """
    a = _check_adjacency(a)
    n = a.shape[0]
    occ = [(np.eye(2 ** n) - embed_operator(SIGMA_Z, j, n)) / 2 for j in range(n)]
    out = np.zeros((2 ** n, 2 ** n))
    for j, k in itertools.combinations(range(n), 2):
        diff = occ[j] - occ[k]
        out += 0.5 * a[j, k] * (diff @ diff)
    return out


def coupling_hamiltonian_reduced(a: np.ndarray) -> np.ndarray:
    """Closed form ``(1/4) sum_{j<k} a_jk (I - Z_j Z_k)``."""
    a = _check_adjacency(a)
    n = a.shape[0]
    out = np.zeros((2 ** n, 2 ** n))
    for j, k in itertools.combinations(range(n), 2):
        zz = embed_operator(SIGMA_Z, j, n) @ embed_operator(SIGMA_Z, k, n)
        out += 0.25 * a[j, k] * (np.eye(2 ** n) - zz)
    return out


@lru_cache(maxsize=None)
def _pair_parity(n: int):
    # (2^n, pairs) table of (1 - z_j z_k) and the matching upper-triangle indices
    bits = (np.arange(2 ** n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    z = 1 - 2 * bits
    pairs = list(itertools.combinations(range(n), 2))
    table = np.stack([1 - z[:, j] * z[:, k] for j, k in pairs], axis=1).astype(float) if pairs else np.zeros((2 ** n, 0))
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    return table, rows, cols


def coupling_diagonal(a: np.ndarray) -> np.ndarray:
    """Diagonal of the coupling Hamiltonian for one edge matrix or a batch of them."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    table, rows, cols = _pair_parity(n)
    return 0.25 * a[..., rows, cols] @ table.T


def build_coupling_hamiltonian(a: np.ndarray) -> np.ndarray:
    """Diagonal ``2^n x 2^n`` coupling Hamiltonian from a symmetric, zero-diagonal edge matrix."""
    a = _check_adjacency(a)
    if np.any(np.diag(a) != 0):
        raise ValueError("edge matrix must have a zero diagonal")
    return np.diag(coupling_diagonal(a))


@lru_cache(maxsize=None)
def _transverse(n: int) -> np.ndarray:
    out = sum(embed_operator(SIGMA_X, i, n) for i in range(n))
    out.setflags(write=False)
    return out


def build_transverse_hamiltonian(n: int) -> np.ndarray:
    """``sum_i X_i`` on ``n`` qubits (unit coefficient)."""
    if n < 1:
        raise ValueError("need at least one qubit")
    return _transverse(n).copy()


def layer_unitary(gamma_l, h_c, h_t) -> Tensor:
    """``exp(-i (gamma_l[0] h_c + gamma_l[1] h_t))``; ``h_c`` may carry batch axes."""
    gamma_l = as_tensor(gamma_l)
    if gamma_l.shape != (N_TERMS,):
        raise ValueError(f"gamma_l must have shape ({N_TERMS},), got {gamma_l.shape}")
    if not np.all(np.isfinite(gamma_l.data)):
        raise ValueError("gamma_l must be finite")
    return expm_minus_i(gamma_l[0] * h_c + gamma_l[1] * h_t)


def cayley(theta) -> Tensor:
    """``(T - iI)(T + iI)^-1`` with ``T = theta + theta^dagger``."""
    theta = as_tensor(theta)
    if not np.all(np.isfinite(theta.data)):
        raise ValueError("theta must be finite")
    herm = theta + adjoint(theta)
    ident = 1j * np.eye(theta.shape[-1])
    return matmul(herm - ident, mat_inverse(herm + ident))


def product_state(amps) -> Tensor:
    """Kronecker product over the node axis of per-node C^2 vectors ``(..., n, 2)``."""
    amps = as_tensor(amps)
    n = amps.shape[-2]
    lead = amps.shape[:-2]
    psi = amps[..., 0, :]
    for i in range(1, n):
        psi = (psi.expand_dims(-1) * amps[..., i, :].expand_dims(-2)).reshape(lead + (-1,))
    return psi


def encode_state(h, encoder: MLP) -> Tensor:
    """Normalized product state from per-node encoder outputs read as (Re, Im, Re, Im)."""
    h = as_tensor(h)
    out = encoder(h)
    if out.shape[-1] != 4:
        raise ValueError(f"encoder must emit 4 reals per node, got {out.shape[-1]}")
    amps = complex_from(out[..., 0::2], out[..., 1::2])
    psi = product_state(amps)
    length = norm(psi, axis=-1, keepdims=True)
    if np.any(length.data == 0):
        raise DegenerateEncodingError("encoded product state has zero norm")
    return psi / length


def eqgnn_pool(psi) -> Tensor:
    """Mean of the state amplitudes (one complex scalar per state)."""
    psi = as_tensor(psi)
    return psi.mean(axis=-1, keepdims=True)


def evolve(psi, h_c, h_t, gamma: Tensor, theta: Tensor, trace=None) -> Tensor:
    """Apply ``U_theta^l U_l U_theta^l^dagger`` for each layer to column states ``(..., d)``."""
    col = as_tensor(psi).expand_dims(-1)
    for l in range(gamma.shape[0]):
        u_l = layer_unitary(gamma[l], h_c, h_t)
        u_t = cayley(theta[l])
        col = matmul(u_t, matmul(u_l, matmul(adjoint(u_t), col)))
        if trace is not None:
            trace.append(col.data[..., 0].copy())
    return col.reshape(col.shape[:-1])


class QuantumGNN(Module):
    """QGNN (``pooled=False``) or EQGNN (``pooled=True``).

    The decoder is a stack of complex affine maps; the logits are the
    moduli of its two complex outputs (squared if ``squared_modulus``).
    """

    quantum = True

    def __init__(self, layers: int = 6, n_nodes: int = 3, encoder_hidden: int = 128, decoder_hidden: int = 120,
                 pooled: bool = False, squared_modulus: bool = False, n_features: int = 8, rng=None,
                 activation: str = "softplus", theta_scale: float = 0.01, gamma_max: float = 0.1):
        super().__init__()
        if n_nodes != 3:
            raise ValueError(f"quantum models are built for 3-node jets, got n_nodes={n_nodes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_nodes, self.n_layers = n_nodes, layers
        self.pooled, self.squared_modulus = pooled, squared_modulus
        dim = 2 ** n_nodes
        self.encoder = MLP(n_features, encoder_hidden, 4, rng, activation)
        self.gamma = Tensor(rng.uniform(0.0, gamma_max, size=(layers, N_TERMS)), requires_grad=True)
        theta = theta_scale * (rng.normal(size=(layers, dim, dim)) + 1j * rng.normal(size=(layers, dim, dim)))
        self.theta = ComplexTensor(theta, requires_grad=True)
        self.decoder = ComplexMLP(1 if pooled else dim, decoder_hidden, 2, rng, activation)
        self._h_t = build_transverse_hamiltonian(n_nodes)

    @property
    def name(self) -> str:
        return "eqgnn" if self.pooled else "qgnn"

    @property
    def hidden(self) -> int:
        return 2 ** self.n_nodes

    def final_state(self, h, a, trace=None) -> Tensor:
        h = as_tensor(h)
        if h.shape[-2] != self.n_nodes:
            raise ValueError(f"model built for {self.n_nodes} nodes, jet has {h.shape[-2]}")
        a = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=float)
        psi = encode_state(h, self.encoder)
        if trace is not None:
            trace.append(psi.data.copy())
        d = coupling_diagonal(a)
        h_c = d[..., :, None] * np.eye(d.shape[-1])
        return evolve(psi, h_c, self._h_t, self.gamma, self.theta, trace)

    def forward(self, h, x, a) -> Tensor:
        psi = self.final_state(h, a)
        z = self.decoder(eqgnn_pool(psi) if self.pooled else psi)
        r = modulus(z)
        return r * r if self.squared_modulus else r

    __call__ = forward

    def loss(self, h, x, a, labels) -> Tensor:
        return softmax_cross_entropy(self.forward(h, x, a), labels)

    @staticmethod
    def scores(logits: np.ndarray) -> np.ndarray:
        """Class-1 share of the (nonnegative) modulus logits."""
        total = logits.sum(axis=-1)
        return np.where(total > 0, logits[..., 1] / np.where(total > 0, total, 1.0), 0.5)


def quantum_parameter_count(layers: int, encoder_hidden: int, decoder_hidden: int, pooled: bool,
                            n_nodes: int = 3, n_features: int = 8) -> int:
    dim = 2 ** n_nodes
    enc = n_features * encoder_hidden + encoder_hidden + encoder_hidden * 4 + 4
    d_in = 1 if pooled else dim
    if decoder_hidden:
        dec = 2 * (d_in * decoder_hidden + decoder_hidden + decoder_hidden * 2 + 2)
    else:
        dec = 2 * (d_in * 2 + 2)
    return enc + layers * N_TERMS + layers * dim * dim * 2 + dec
