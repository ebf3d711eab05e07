"""Jet ingestion, feature engineering, truncation, scaling and splitting."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FEATURE_NAMES = ("pt", "y", "phi", "mt", "e", "px", "py", "pz")
N_FEATURES = len(FEATURE_NAMES)

# Rest masses in GeV, keyed by |PDG id|.
PARTICLE_MASSES = {
    22: 0.0,  # photon
    11: 0.00051099895,  # electron
    13: 0.1056583755,  # muon
    111: 0.1349768,  # neutral pion
    211: 0.13957039,  # charged pion
    321: 0.493677,  # charged kaon
    130: 0.497611,  # K_L
    310: 0.497611,  # K_S
    2212: 0.93827208816,  # proton
    2112: 0.93956542052,  # neutron
}

CACHE_MAGIC = b"QJET1"
_CACHE_HEADER = struct.Struct("<5sIII")


class UnknownParticleError(LookupError):
    def __init__(self, pdg_id: int):
        super().__init__(f"no mass known for PDG id {pdg_id}")
        self.pdg_id = pdg_id


class DataFormatError(ValueError):
    """Malformed input; ``line`` is 1-based when the source is a file."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class RawParticle:
    pt: float
    y: float
    phi: float
    pdg_id: int

    def __post_init__(self):
        if not self.pt > 0:
            raise DataFormatError(f"particle pt must be positive, got {self.pt}")
        if not -math.pi < self.phi <= math.pi:
            raise DataFormatError(f"particle phi must lie in (-pi, pi], got {self.phi}")


@dataclass(frozen=True)
class JetRecord:
    particles: tuple
    label: int

    def __post_init__(self):
        if not self.particles:
            raise DataFormatError("jet has no particles")
        if self.label not in (0, 1):
            raise DataFormatError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class FeaturedJet:
    """One truncated jet graph.

    ``h`` holds the 8 node features per row (pT-descending), ``x`` the
    (phi, y) coordinates and ``a`` the Delta-R edge matrix.
    """

    h: np.ndarray
    x: np.ndarray
    a: np.ndarray
    label: int

    @property
    def n_nodes(self) -> int:
        return self.h.shape[0]


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))


@dataclass
class DataConfig:
    n_train: int = 10_000
    n_val: int = 1_250
    n_test: int = 1_250
    min_particles: int = 10
    n_nodes: int = 3
    seed: int = 0
    scale_on_train: bool = False
    wrap_phi: bool = False

    @property
    def total(self) -> int:
        return self.n_train + self.n_val + self.n_test


# ---------------------------------------------------------------------------
# per-particle / per-jet transforms
# ---------------------------------------------------------------------------

def particle_mass(pdg_id: int) -> float:
    try:
        return PARTICLE_MASSES[abs(int(pdg_id))]
    except KeyError:
        raise UnknownParticleError(pdg_id) from None


def engineer_features(p: RawParticle) -> np.ndarray:
    """(pT, y, phi, m_T, E, p_x, p_y, p_z) for one particle, unscaled."""
    m = particle_mass(p.pdg_id)
    mt = math.sqrt(m * m + p.pt * p.pt)
    return np.array([
        p.pt,
        p.y,
        p.phi,
        mt,
        mt * math.cosh(p.y),
        p.pt * math.cos(p.phi),
        p.pt * math.sin(p.phi),
        mt * math.sinh(p.y),
    ])


def _wrap(dphi):
    # into (-pi, pi]
    return -((-np.asarray(dphi) + math.pi) % (2 * math.pi) - math.pi)


def delta_r(xi: Sequence[float], xj: Sequence[float], wrap_phi: bool = False) -> float:
    """Euclidean distance between two (phi, y) points."""
    dphi = xi[0] - xj[0]
    if wrap_phi:
        dphi = float(_wrap(dphi))
    dy = xi[1] - xj[1]
    return math.sqrt(dphi * dphi + dy * dy)


def edge_matrix(x: np.ndarray, wrap_phi: bool = False) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    if wrap_phi:
        diff[..., 0] = _wrap(diff[..., 0])
    return np.sqrt((diff ** 2).sum(-1))


def top_particles(jet: JetRecord, n: int) -> list:
    """The ``n`` highest-pT particles, ties broken by original index."""
    order = sorted(range(len(jet.particles)), key=lambda i: -jet.particles[i].pt)
    return [jet.particles[i] for i in order[:n]]


def featurize_jet(jet: JetRecord, n_nodes: int = 3, wrap_phi: bool = False) -> FeaturedJet:
    if len(jet.particles) < n_nodes:
        raise InsufficientDataError(f"jet has {len(jet.particles)} particles, need {n_nodes}")
    parts = top_particles(jet, n_nodes)
    h = np.stack([engineer_features(p) for p in parts])
    x = h[:, [2, 1]].copy()
    return FeaturedJet(h=h, x=x, a=edge_matrix(x, wrap_phi), label=int(jet.label))


def select_jets(jets: Iterable[JetRecord], min_particles: int = 10) -> list:
    return [j for j in jets if len(j.particles) >= min_particles]


# ---------------------------------------------------------------------------
# scaling and splitting
# ---------------------------------------------------------------------------

def feature_maxima(jets: Sequence[FeaturedJet]) -> np.ndarray:
    if not jets:
        raise InsufficientDataError("cannot compute feature maxima of an empty set")
    mx = np.max(np.stack([j.h for j in jets]), axis=(0, 1))
    if np.any(mx <= 0):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(mx <= 0)]
        raise ValueError(f"non-positive maximum for feature(s) {bad}; max-scaling undefined")
    return mx


def rescale(jets: Sequence[FeaturedJet], scale: np.ndarray) -> list:
    return [FeaturedJet(j.h / scale, j.x, j.a, j.label) for j in jets]


def split_featured(featured: Sequence[FeaturedJet], cfg: DataConfig) -> DatasetSplit:
    """Seeded shuffle, take the configured prefix, max-scale, split sequentially."""
    if len(featured) < cfg.total:
        raise InsufficientDataError(
            f"need {cfg.total} jets ({cfg.n_train}/{cfg.n_val}/{cfg.n_test}) but only {len(featured)} survive selection"
        )
    order = np.random.default_rng(cfg.seed).permutation(len(featured))[: cfg.total]
    chosen = [featured[i] for i in order]
    basis = chosen[: cfg.n_train] if cfg.scale_on_train else chosen
    scale = feature_maxima(basis)
    chosen = rescale(chosen, scale)
    a, b = cfg.n_train, cfg.n_train + cfg.n_val
    return DatasetSplit(train=chosen[:a], val=chosen[a:b], test=chosen[b:], scale=scale)


def build_dataset(jets: Sequence[JetRecord], cfg: DataConfig | None = None) -> DatasetSplit:
    cfg = cfg or DataConfig()
    kept = select_jets(jets, cfg.min_particles)
    if len(kept) < cfg.total:
        raise InsufficientDataError(
            f"need {cfg.total} jets but only {len(kept)} of {len(jets)} have >= {cfg.min_particles} particles"
        )
    featured = [featurize_jet(j, cfg.n_nodes, cfg.wrap_phi) for j in kept]
    return split_featured(featured, cfg)


def stack_jets(jets: Sequence[FeaturedJet]):
    """Batch arrays ``(h, x, a, labels)`` with a leading jet axis."""
    if not jets:
        raise ValueError("empty batch")
    n = {j.n_nodes for j in jets}
    if len(n) != 1:
        raise ValueError(f"mixed node counts in one batch: {sorted(n)}")
    return (
        np.stack([j.h for j in jets]),
        np.stack([j.x for j in jets]),
        np.stack([j.a for j in jets]),
        np.array([j.label for j in jets], dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def parse_jet(obj) -> JetRecord:
    if not isinstance(obj, dict):
        raise DataFormatError("expected a JSON object")
    try:
        parts = tuple(
            RawParticle(float(p["pt"]), float(p["y"]), float(p["phi"]), int(p["pdgid"])) for p in obj["particles"]
        )
        label = obj["label"]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"missing or malformed field: {exc}") from None
    if isinstance(label, bool) or not isinstance(label, int):
        raise DataFormatError(f"label must be 0 or 1, got {label!r}")
    for p in parts:
        particle_mass(p.pdg_id)
    return JetRecord(parts, label)


def read_jsonl(path) -> list:
    jets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                jets.append(parse_jet(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON ({exc.msg})", line=lineno) from None
            except (DataFormatError, UnknownParticleError) as exc:
                raise DataFormatError(str(exc), line=lineno) from None
    return jets


def jet_to_json(jet: JetRecord) -> str:
    return json.dumps({
        "label": jet.label,
        "particles": [{"pt": p.pt, "y": p.y, "phi": p.phi, "pdgid": p.pdg_id} for p in jet.particles],
    })


def write_jsonl(jets: Iterable[JetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for jet in jets:
            fh.write(jet_to_json(jet) + "\n")


def write_cache(jets: Sequence[FeaturedJet], path, scale=None) -> None:
    """Binary cache: magic, header, feature scale, then one row of doubles per jet.

    Each row is ``label, h, x, a`` flattened; ``h`` is stored divided by
    ``scale`` (all ones for unscaled features).
    """
    n = jets[0].n_nodes if jets else 3
    scale = np.ones(N_FEATURES) if scale is None else np.asarray(scale, dtype=float)
    width = 1 + n * N_FEATURES + 2 * n + n * n
    rows = np.empty((len(jets), width), dtype="<f8")
    for r, j in enumerate(jets):
        if j.n_nodes != n:
            raise ValueError("all cached jets must share a node count")
        rows[r] = np.concatenate([[j.label], j.h.ravel(), j.x.ravel(), j.a.ravel()])
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, len(jets), n, N_FEATURES))
        fh.write(scale.astype("<f8").tobytes())
        fh.write(rows.tobytes())


def read_cache(path):
    """Return ``(jets, scale)`` from a QJET1 cache."""
    blob = Path(path).read_bytes()
    if len(blob) < _CACHE_HEADER.size or blob[:5] != CACHE_MAGIC:
        raise DataFormatError(f"{path} is not a QJET1 cache")
    _, count, n, k = _CACHE_HEADER.unpack_from(blob)
    if k != N_FEATURES:
        raise DataFormatError(f"cache has {k} features per node, expected {N_FEATURES}")
    off = _CACHE_HEADER.size
    scale = np.frombuffer(blob, "<f8", N_FEATURES, off).astype(float)
    off += 8 * N_FEATURES
    width = 1 + n * k + 2 * n + n * n
    if len(blob) - off != 8 * width * count:
        raise DataFormatError(f"{path} is truncated or has trailing bytes")
    rows = np.frombuffer(blob, "<f8", count * width, off).reshape(count, width)
    jets = []
    for row in rows:
        h = row[1 : 1 + n * k].reshape(n, k).copy()
        x = row[1 + n * k : 1 + n * k + 2 * n].reshape(n, 2).copy()
        a = row[1 + n * k + 2 * n :].reshape(n, n).copy()
        jets.append(FeaturedJet(h, x, a, int(row[0])))
    return jets, scale


def unscale(jets: Sequence[FeaturedJet], scale: np.ndarray) -> list:
    return [FeaturedJet(j.h * scale, j.x, j.a, j.label) for j in jets]


# ---------------------------------------------------------------------------
# synthetic jets
# ---------------------------------------------------------------------------

_SYNTH_SPECIES = np.array([211, 22, 321, 130, 2212, 2112, 11, 13])
_SYNTH_WEIGHTS = np.array([0.55, 0.25, 0.08, 0.04, 0.03, 0.03, 0.01, 0.01])


@dataclass(frozen=True)
class SynthConfig:
    """Class-conditional knobs for the toy generator.

    Quark-like jets (label 1) are narrow with few hard constituents; gluon-like
    jets (label 0) are wider, with more and softer constituents.
    """

    quark_spread: float = 0.05
    gluon_spread: float = 0.09
    quark_multiplicity: float = 14.0
    gluon_multiplicity: float = 22.0
    quark_concentration: float = 0.6
    gluon_concentration: float = 1.0
    min_count: int = 8

    @classmethod
    def strong(cls) -> "SynthConfig":
        return cls(quark_spread=0.03, gluon_spread=0.15, quark_multiplicity=12.0, gluon_multiplicity=30.0,
                   quark_concentration=0.4, gluon_concentration=1.5)

    @property
    def spread_gap(self) -> float:
        return self.gluon_spread - self.quark_spread


def synth_jets(n: int, seed: int = 0, cfg: SynthConfig | None = None) -> list:
    """Deterministic toy quark/gluon jets with a learnable class signal."""
    if n <= 0:
        raise ValueError("n must be positive")
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    jets = []
    for label in labels:
        quark = label == 1
        mult = cfg.min_count + rng.poisson(cfg.quark_multiplicity if quark else cfg.gluon_multiplicity)
        spread = cfg.quark_spread if quark else cfg.gluon_spread
        conc = cfg.quark_concentration if quark else cfg.gluon_concentration
        jet_pt = rng.uniform(500.0, 550.0)
        jet_y = rng.uniform(-1.7, 1.7)
        jet_phi = rng.uniform(-math.pi, math.pi)
        fracs = rng.dirichlet(np.full(mult, conc))
        dphi = rng.normal(0.0, spread, mult)
        dy = rng.normal(0.0, spread, mult)
        species = rng.choice(_SYNTH_SPECIES, size=mult, p=_SYNTH_WEIGHTS)
        signs = rng.choice([-1, 1], size=mult)
        parts = []
        for f, a, b, s, sg in zip(fracs, dphi, dy, species, signs):
            pdg = int(s) if s in (22, 130, 111) else int(s * sg)
            parts.append(RawParticle(float(max(f * jet_pt, 1e-3)), float(jet_y + b), float(_wrap(jet_phi + a)), pdg))
        jets.append(JetRecord(tuple(parts), int(label)))
    return jets
