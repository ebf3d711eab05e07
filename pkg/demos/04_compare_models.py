"""Train all four classifiers briefly on toy jets and compare test AUC.

This runs a reduced setting (few jets, few epochs, narrow quantum widths) so it
finishes in about a minute; drop the overrides to get the full-size models.
"""
import time

from qjet.config import ExperimentConfig
from qjet.experiment import build_model, load_dataset
from qjet.training import train_model

common = dict(synth_n=500, synth_preset="strong", n_train=300, n_val=100, n_test=100, epochs=4, checkpoint_start=2)
small = {"gnn": {}, "egnn": {}, "qgnn": dict(encoder_hidden=16, decoder_hidden=8),
         "eqgnn": dict(encoder_hidden=16, decoder_hidden=8)}

for name, extra in small.items():
    cfg = ExperimentConfig(model=name, **common, **extra).validate()
    data = load_dataset(cfg)
    model = build_model(cfg)
    t0 = time.perf_counter()
    report = train_model(model, data, cfg.train_config())
    print(f"{name:>5}: |Theta| = {report.n_params:5d}, best epoch {report.best_epoch}, "
          f"test acc {report.test_accuracy:.3f}, test AUC {report.test_auc:.3f} ({time.perf_counter() - t0:.0f}s)")
