"""Inside the quantum model: encoding, Hamiltonians and norm-preserving evolution."""
import numpy as np

from qjet.data import DataConfig, build_dataset, synth_jets
from qjet.quantum import QuantumGNN, build_coupling_hamiltonian, build_transverse_hamiltonian

# One edge of unit weight between two qubits: only the anti-aligned states pay energy.
print("two-qubit coupling diagonal:", np.diag(build_coupling_hamiltonian(np.array([[0.0, 1.0], [1.0, 0.0]]))))
print("three-qubit transverse spectrum:", np.round(np.linalg.eigvalsh(build_transverse_hamiltonian(3)), 6))

split = build_dataset(synth_jets(40, seed=1), DataConfig(n_train=20, n_val=5, n_test=5))
jet = split.train[0]
model = QuantumGNN(layers=6, pooled=True, rng=np.random.default_rng(0))
trace = []
model.final_state(jet.h, jet.a, trace)
for layer, state in enumerate(trace):
    top = np.argsort(-np.abs(state))[:2]
    print(f"after layer {layer}: norm {np.linalg.norm(state):.15f}, largest amplitudes at |{top[0]:03b}>, |{top[1]:03b}>")
print("pooled amplitude (mean over the 8 basis states):", np.round(trace[-1].mean(), 5))
print("class logits |z0|, |z1|:", model(jet.h, jet.x, jet.a).data, "for true label", jet.label)
