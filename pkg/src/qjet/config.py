"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .data import DataConfig, SynthConfig
from .training import TrainConfig

MODELS = ("gnn", "egnn", "qgnn", "eqgnn")

# Reference shapes; the quantum encoder/decoder widths put |Theta| near 5100.
MODEL_DEFAULTS = {
    "gnn": dict(hidden=10, layers=5, batch=64, encoder_hidden=0, decoder_hidden=0),
    "egnn": dict(hidden=10, layers=4, batch=64, encoder_hidden=0, decoder_hidden=0),
    "qgnn": dict(hidden=8, layers=6, batch=1, encoder_hidden=128, decoder_hidden=120),
    "eqgnn": dict(hidden=8, layers=6, batch=1, encoder_hidden=128, decoder_hidden=330),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "gnn"
    hidden: int | None = None
    layers: int | None = None
    lr: float = 1e-3
    epochs: int = 20
    batch: int | None = None
    seed: int = 0
    checkpoint_start: int = 15
    n_train: int = 10_000
    n_val: int = 1_250
    n_test: int = 1_250
    data: str = ""
    synth_n: int = 0
    synth_seed: int = 0
    synth_preset: str = "default"
    output_dir: str = "runs"
    encoder_hidden: int | None = None
    decoder_hidden: int | None = None
    min_particles: int = 10
    n_nodes: int = 3
    wrap_phi: bool = False
    scale_on_train: bool = False
    squared_modulus: bool = False
    activation: str = "softplus"

    @property
    def quantum(self) -> bool:
        return self.model in ("qgnn", "eqgnn")

    def resolved(self) -> "ExperimentConfig":
        """Fill unset model-dependent fields from the model's defaults."""
        if self.model not in MODEL_DEFAULTS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        defaults = MODEL_DEFAULTS[self.model]
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        if self.quantum and self.hidden is None:
            updates["hidden"] = 2 ** self.n_nodes
        return replace(self, **updates)

    def validate(self) -> "ExperimentConfig":
        cfg = self.resolved()
        if cfg.quantum:
            if cfg.n_nodes != 3:
                raise ConfigError(f"{cfg.model} needs n_nodes = 3, got {cfg.n_nodes}")
            if cfg.hidden != 2 ** cfg.n_nodes:
                raise ConfigError(f"{cfg.model} fixes hidden = 2^n_nodes = {2 ** cfg.n_nodes}, got {cfg.hidden}")
        for name in ("hidden", "batch", "n_train", "n_nodes", "min_particles"):
            if getattr(cfg, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("layers", "epochs", "n_val", "n_test", "checkpoint_start", "encoder_hidden", "decoder_hidden"):
            if getattr(cfg, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if cfg.quantum and cfg.encoder_hidden < 1:
            raise ConfigError("encoder_hidden must be positive for quantum models")
        if not cfg.lr > 0:
            raise ConfigError("lr must be positive")
        if cfg.min_particles < cfg.n_nodes:
            raise ConfigError("min_particles must be at least n_nodes")
        if not cfg.data and cfg.synth_n <= 0:
            raise ConfigError("set either data = <path> or synth_n = <count>")
        if cfg.synth_preset not in ("default", "strong"):
            raise ConfigError(f"unknown synth_preset {cfg.synth_preset!r}")
        if cfg.activation not in ("softplus", "relu", "tanh"):
            raise ConfigError(f"unknown activation {cfg.activation!r}")
        return cfg

    def data_config(self) -> DataConfig:
        return DataConfig(n_train=self.n_train, n_val=self.n_val, n_test=self.n_test,
                          min_particles=self.min_particles, n_nodes=self.n_nodes, seed=self.seed,
                          scale_on_train=self.scale_on_train, wrap_phi=self.wrap_phi)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch=self.batch, lr=self.lr, seed=self.seed,
                           checkpoint_start=self.checkpoint_start)

    def synth_config(self) -> SynthConfig:
        return SynthConfig.strong() if self.synth_preset == "strong" else SynthConfig()


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    try:
        if kind == "bool":
            return _BOOLS[raw.lower()]
        if kind.startswith("int"):
            return None if raw.lower() == "none" else int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
