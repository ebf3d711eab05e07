"""Acceptance gates.

Gates 1-9 are hard: each prints one PASS/FAIL line and fails the test on FAIL.
Gates 10-12 are stochastic desk-scale reproductions. They print a REPORT or
SKIP line and never fail the suite. Gate 10 runs when ``QJET_SOFT_GATES=1``
(several minutes per quantum model on one core). Gates 11-12 additionally
need ``QJET_DATA`` pointing at a converted quark/gluon JSONL file or cache.
"""
from __future__ import annotations

import itertools
import math
import os
import time

import numpy as np
import pytest

from qjet.classical import ClassicalGNN, GNNLayer, egnn_layer
from qjet.config import ExperimentConfig
from qjet.data import PARTICLE_MASSES, RawParticle, engineer_features, particle_mass, stack_jets, synth_jets
from qjet.experiment import build_model, load_dataset
from qjet.metrics import mann_whitney_auc, roc_auc
from qjet.quantum import (
    QuantumGNN,
    build_coupling_hamiltonian,
    build_transverse_hamiltonian,
    cayley,
    coupling_hamiltonian_kron,
    coupling_hamiltonian_reduced,
    layer_unitary,
    product_state,
)
from qjet.training import train_model

from conftest import fd_check

SOFT = os.environ.get("QJET_SOFT_GATES") == "1"
DATA = os.environ.get("QJET_DATA", "")


@pytest.fixture
def emit(capsys):
    def _emit(gate, status, detail):
        with capsys.disabled():
            print(f"\n[gate {gate:>2}] {status:<6} {detail}")
    return _emit


def gate(emit, number, ok, detail):
    emit(number, "PASS" if ok else "FAIL", detail)
    assert ok, f"gate {number}: {detail}"


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# hard gates
# ---------------------------------------------------------------------------

def test_gate_01_coupling_identity(emit):
    rng = np.random.default_rng(101)
    worst = 0.0
    for n in (2, 3):
        for _ in range(100):
            a = rng.uniform(0, 2, size=(n, n))
            a = (a + a.T) / 2
            np.fill_diagonal(a, 0.0)
            lit = coupling_hamiltonian_kron(a)
            worst = max(worst, np.abs(lit - coupling_hamiltonian_reduced(a)).max())
    gate(emit, 1, worst <= 1e-12, f"literal vs reduced coupling Hamiltonian, 200 edge sets, max |diff| = {worst:.2e}")


def test_gate_02_egnn_equivariance(emit):
    rng = np.random.default_rng(102)
    layer = GNNLayer(8, 10, rng, equivariant=True)
    h = rng.normal(size=(3, 8))
    x = rng.normal(size=(3, 2))
    a = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    h_ref, x_ref = egnn_layer(h, x, a, layer)
    worst_h = worst_x = 0.0
    for _ in range(200):
        r, t = rotation(rng.uniform(-math.pi, math.pi)), rng.normal(scale=3.0, size=2)
        h_new, x_new = egnn_layer(h, x @ r.T + t, a, layer)
        worst_h = max(worst_h, np.abs(h_new.data - h_ref.data).max())
        worst_x = max(worst_x, np.abs(x_new.data - (x_ref.data @ r.T + t)).max())
    gate(emit, 2, max(worst_h, worst_x) <= 1e-9,
         f"EGNN layer, 200 rotations+translations: features {worst_h:.2e}, coordinates {worst_x:.2e}")


def test_gate_03_amplitude_sum_permutation(emit):
    rng = np.random.default_rng(103)
    worst = 0.0
    for m in range(1, 5):
        for _ in range(25):
            factors = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
            ref = product_state(factors).data.sum()
            for perm in itertools.permutations(range(m)):
                worst = max(worst, abs(product_state(factors[list(perm)]).data.sum() - ref))
    gate(emit, 3, worst <= 1e-12, f"Kronecker amplitude sum under factor permutations (m<=4), max |diff| = {worst:.2e}")


def test_gate_04_unitarity(emit):
    rng = np.random.default_rng(104)
    h_t = build_transverse_hamiltonian(3)
    worst_u = 0.0
    for _ in range(100):
        a = rng.uniform(0, 1, size=(3, 3))
        a = (a + a.T) / 2
        np.fill_diagonal(a, 0.0)
        u = layer_unitary(rng.normal(scale=2.0, size=2), build_coupling_hamiltonian(a), h_t).data
        c = cayley(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))).data
        for m in (u, c):
            worst_u = max(worst_u, np.linalg.norm(m.conj().T @ m - np.eye(8)))
    jets = synth_jets(40, seed=4)
    from qjet.data import featurize_jet

    h, _, a, _ = stack_jets([featurize_jet(j) for j in jets])
    worst_n = 0.0
    for pooled in (False, True):
        model = QuantumGNN(6, pooled=pooled, rng=np.random.default_rng(5), theta_scale=0.5, gamma_max=1.0)
        trace = []
        model.final_state(h / np.abs(h).max(axis=(0, 1)), a, trace)
        assert len(trace) == 7
        worst_n = max(worst_n, max(np.abs(np.linalg.norm(s, axis=-1) - 1).max() for s in trace))
    ok = worst_u <= 1e-10 and worst_n <= 1e-10
    gate(emit, 4, ok, f"||U^dag U - I||_F max {worst_u:.2e}; state norm drift over 6 layers max {worst_n:.2e}")


def _micro_models():
    rng = np.random.default_rng(105)
    return {
        "gnn": ClassicalGNN(6, 5, False, rng=rng),
        "egnn": ClassicalGNN(6, 4, True, rng=rng),
        "qgnn": QuantumGNN(6, encoder_hidden=4, decoder_hidden=3, rng=rng, theta_scale=0.3, gamma_max=1.0),
        "eqgnn": QuantumGNN(6, encoder_hidden=4, decoder_hidden=3, pooled=True, rng=rng, theta_scale=0.3,
                            gamma_max=1.0),
    }


def test_gate_05_gradient_fidelity(emit, micro_batch):
    h, x, a, y = micro_batch
    details, ok = [], True
    for name, model in _micro_models().items():
        params = model.parameters()
        analytic, numeric = fd_check(params, lambda: model.loss(h, x, a, y))
        # relative error with a small absolute floor for entries whose true gradient is ~0
        err = float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-4)))
        groups = sorted({n.split(".")[0] for n, _ in model.named_parameters()})
        details.append(f"{name}: {len(analytic)} params over {','.join(groups)}, max rel err {err:.1e}")
        ok &= err <= 1e-4
    gate(emit, 5, ok, "; ".join(details))


def test_gate_06_metric_oracle(emit):
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 200))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = rng.integers(0, 10, n) / 10.0 if rng.random() < 0.5 else rng.random(n)
        worst = max(worst, abs(roc_auc(scores, labels)[1] - mann_whitney_auc(scores, labels)))
    hand = roc_auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])[1]
    gate(emit, 6, worst <= 1e-12 and hand == 0.75,
         f"trapezoid vs Mann-Whitney over 100 sets max |diff| = {worst:.2e}; hand case AUC = {hand!r}")


def test_gate_07_classical_permutation_invariance(emit):
    from qjet.data import DataConfig, build_dataset

    split = build_dataset(synth_jets(60, seed=7), DataConfig(n_train=30, n_val=0, n_test=0))
    h, x, a, _ = stack_jets(split.train)
    worst = 0.0
    for model in _micro_models()["gnn"], _micro_models()["egnn"]:
        ref = model(h, x, a).data
        for perm in itertools.permutations(range(3)):
            p = list(perm)
            out = model(h[:, p], x[:, p], a[:, p][:, :, p]).data
            worst = max(worst, np.abs(out - ref).max())
    gate(emit, 7, worst <= 1e-12, f"GNN/EGNN logits under all node permutations, 30 jets, max |diff| = {worst:.2e}")


def test_gate_08_mass_shell(emit):
    rng = np.random.default_rng(108)
    species = np.array(sorted(PARTICLE_MASSES))
    worst = 0.0
    for _ in range(10_000):
        phi = rng.uniform(-math.pi, math.pi)
        p = RawParticle(float(rng.uniform(0.01, 1500.0)), float(rng.uniform(-4, 4)), float(phi if phi > -math.pi else 0.0),
                        int(rng.choice(species) * rng.choice([-1, 1])))
        pt, y, _, mt, e, px, py, pz = engineer_features(p)
        m = particle_mass(p.pdg_id)
        worst = max(worst, abs(e * e - (px * px + py * py + pz * pz) - m * m) / (e * e))
    gate(emit, 8, worst <= 1e-9, f"E^2 - |p|^2 = m^2 on 10,000 particles, max relative residual {worst:.2e}")


def test_gate_09_determinism(emit):
    base = dict(synth_n=160, n_train=60, n_val=30, n_test=30, epochs=2, checkpoint_start=1, seed=9)
    same = []
    for model in ("egnn", "eqgnn"):
        cfg = ExperimentConfig(model=model, encoder_hidden=8, decoder_hidden=6, **base).validate()
        if model == "egnn":
            cfg = ExperimentConfig(model=model, **base).validate()
        runs = [train_model(build_model(cfg), load_dataset(cfg), cfg.train_config()) for _ in range(2)]
        same.append(runs[0] == runs[1] and np.array_equal(runs[0].best_params, runs[1].best_params))
    gate(emit, 9, all(same), f"two seeded runs identical: egnn={same[0]}, eqgnn={same[1]}")


# ---------------------------------------------------------------------------
# soft gates
# ---------------------------------------------------------------------------

def _pooled_features(jets):
    return np.array([np.r_[j.h.mean(0), j.a[np.triu_indices(j.n_nodes, 1)]] for j in jets])


def test_gate_10_synthetic_separability(emit):
    if not SOFT:
        emit(10, "SKIP", "set QJET_SOFT_GATES=1 to train all four models on 2,000 strong-margin synthetic jets")
        return
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import roc_auc_score

    common = dict(synth_n=2000, synth_preset="strong", synth_seed=7, n_train=1600, n_val=200, n_test=200)
    data = load_dataset(ExperimentConfig(model="gnn", **common))
    clf = LogisticRegression(max_iter=5000).fit(_pooled_features(data.train), [j.label for j in data.train])
    base_auc = roc_auc_score([j.label for j in data.test], clf.predict_proba(_pooled_features(data.test))[:, 1])
    emit(10, "REPORT", f"logistic baseline on pooled features: test AUC {base_auc:.4f} (needs > 0.85)")
    for model in ("gnn", "egnn", "qgnn", "eqgnn"):
        cfg = ExperimentConfig(model=model, **common).validate()
        t0 = time.perf_counter()
        rep = train_model(build_model(cfg), data, cfg.train_config())
        verdict = "met" if rep.test_auc is not None and rep.test_auc >= 0.90 else "MISSED"
        emit(10, "REPORT", f"{model}: |Theta|={rep.n_params} test AUC {rep.test_auc:.4f} ({verdict} >= 0.90), "
                           f"best epoch {rep.best_epoch}, {time.perf_counter() - t0:.0f}s")


def _full_scale_reports():
    reports = {}
    for model in ("gnn", "egnn", "qgnn", "eqgnn"):
        for seed in (0, 1, 2):
            cfg = ExperimentConfig(model=model, data=DATA, seed=seed).validate()
            reports[model, seed] = train_model(build_model(cfg), load_dataset(cfg), cfg.train_config())
    return reports


PUBLISHED_AUC = {"gnn": 63.36, "egnn": 67.88, "qgnn": 61.43, "eqgnn": 75.17}


def test_gates_11_12_full_scale(emit):
    if not (SOFT and DATA):
        emit(11, "SKIP", "needs QJET_SOFT_GATES=1 and QJET_DATA=<converted quark/gluon JSONL or cache>")
        emit(12, "SKIP", "same requirement as gate 11")
        return
    reports = _full_scale_reports()
    for model, ref in PUBLISHED_AUC.items():
        aucs = [100 * reports[model, s].test_auc for s in range(3)]
        accs = [100 * reports[model, s].history[reports[model, s].best_epoch].train_acc for s in range(3)]
        emit(11, "REPORT", f"{model}: test AUC {np.round(aucs, 2).tolist()} vs {ref} "
                           f"({'within' if all(abs(v - ref) <= 7 for v in aucs) else 'OUTSIDE'} +-7)")
        emit(12, "REPORT", f"{model}: train acc {np.round(accs, 2).tolist()} "
                           f"({'within' if all(65 <= v <= 83 for v in accs) else 'OUTSIDE'} 70-78 +-5)")
    for better, worse in (("egnn", "gnn"), ("eqgnn", "qgnn")):
        wins = sum(reports[better, s].test_auc > reports[worse, s].test_auc for s in range(3))
        emit(11, "REPORT", f"{better} > {worse} in {wins}/3 seeds")
