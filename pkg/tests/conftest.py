"""Shared fixtures and a finite-difference gradient checker."""
from __future__ import annotations

import numpy as np
import pytest

from qjet.autodiff import backward
from qjet.data import DataConfig, build_dataset, synth_jets
from qjet.nn import get_flat, set_flat

FD_STEP = 1e-6


def flat_grad(params) -> np.ndarray:
    """Gradients in the same (re, im)-interleaved layout as :func:`get_flat`."""
    chunks = []
    for p in params:
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        chunks.append((np.asarray(g, dtype=np.complex128).view(np.float64) if p.is_complex else g).ravel())
    return np.concatenate(chunks)


def fd_check(params, loss_fn, step: float = FD_STEP):
    """Return ``(autodiff, central_difference)`` gradients of ``loss_fn()`` over ``params``."""
    for p in params:
        p.grad = None
    backward(loss_fn())
    analytic = flat_grad(params)
    base = get_flat(params)
    numeric = np.empty_like(base)
    for i in range(base.size):
        v = base.copy()
        v[i] = base[i] + step
        set_flat(params, v)
        up = float(loss_fn().data)
        v[i] = base[i] - step
        set_flat(params, v)
        down = float(loss_fn().data)
        numeric[i] = (up - down) / (2 * step)
    set_flat(params, base)
    return analytic, numeric


def relative_error(analytic, numeric, floor: float = 1e-3) -> float:
    """Max elementwise ``|a - n| / max(|n|, floor)``; the floor keeps near-zero entries from dominating."""
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)))


@pytest.fixture(scope="session")
def small_split():
    jets = synth_jets(120, seed=3)
    return build_dataset(jets, DataConfig(n_train=60, n_val=20, n_test=20, seed=1))


@pytest.fixture(scope="session")
def micro_batch(small_split):
    from qjet.data import stack_jets

    return stack_jets(small_split.train[:3])
