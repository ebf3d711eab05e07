"""Adam, cross-entropy, the epoch loop with validation-AUC checkpointing, and checkpoint files."""
from __future__ import annotations

import hashlib
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward, no_grad, softmax_cross_entropy
from .data import DatasetSplit, stack_jets
from .metrics import UndefinedAUCError, accuracy, roc_auc
from .nn import count_parameters, get_flat, set_flat

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"QJCK1"
_CKPT_HEADER = struct.Struct("<5s32sqqI")
DIVERGENCE_LIMIT = 1e6


class TrainingDivergedError(RuntimeError):
    pass


def cross_entropy(logits, label: int) -> Tensor:
    """``-log softmax(logits)[label]`` for a single 2-vector of logits."""
    return softmax_cross_entropy(logits, [label])


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def _real_view(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    return arr.view(np.float64) if np.iscomplexobj(arr) else arr


def adam_step(params, grads, state: AdamState) -> None:
    """Bias-corrected Adam, in place; complex entries update re and im independently."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros(_real_view(p.data).shape) for p in params]
        state.v = [np.zeros(_real_view(p.data).shape) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        gr = _real_view(np.asarray(g, dtype=p.data.dtype))
        m *= state.beta1
        m += (1.0 - state.beta1) * gr
        v *= state.beta2
        v += (1.0 - state.beta2) * gr * gr
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        data = np.ascontiguousarray(p.data)
        _real_view(data)[...] -= step
        p.data = data


@dataclass
class TrainConfig:
    epochs: int = 20
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    checkpoint_start: int = 15
    eval_batch: int = 1024


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    val_auc: float | None
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    model: str
    n_params: int
    history: list
    best_epoch: int
    best_val_auc: float | None
    test_loss: float
    test_accuracy: float
    test_auc: float | None
    roc_fpr: list
    roc_tpr: list
    optimizer: dict
    best_params: np.ndarray = field(default=None, compare=False, repr=False)

    def to_dict(self, timings: bool = True) -> dict:
        out = asdict(self)
        out.pop("best_params")
        if not timings:
            for row in out["history"]:
                row.pop("seconds")
        return out


@dataclass
class Evaluation:
    loss: float
    accuracy: float
    auc: float | None
    scores: np.ndarray
    labels: np.ndarray
    fpr: np.ndarray | None = None
    tpr: np.ndarray | None = None


def shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def evaluate(model, jets, batch: int = 1024) -> Evaluation:
    """Loss, accuracy and ROC/AUC of ``model`` over ``jets`` without building a graph."""
    h, x, a, y = stack_jets(jets)
    logits = []
    with no_grad():
        for s in range(0, len(y), batch):
            logits.append(model.forward(h[s : s + batch], x[s : s + batch], a[s : s + batch]).data)
    logits = np.concatenate(logits)
    with no_grad():
        loss = float(softmax_cross_entropy(Tensor(logits), y).data)
    scores = model.scores(logits)
    try:
        curve, auc = roc_auc(scores, y)
        fpr, tpr = curve.fpr, curve.tpr
    except UndefinedAUCError:
        auc, fpr, tpr = None, None, None
    return Evaluation(loss, accuracy(scores, y), auc, scores, y, fpr, tpr)


def train_model(model, data: DatasetSplit, cfg: TrainConfig | None = None) -> TrainReport:
    """Adam training with per-epoch validation and best-val-AUC checkpointing.

    Snapshots are taken from epoch ``checkpoint_start`` onward (clamped to
    the last epoch); the best snapshot is restored before the test pass.
    """
    cfg = cfg or TrainConfig()
    if not data.train:
        raise ValueError("empty training set")
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    order_rng = shuffle_rng(cfg.seed)
    h, x, a, y = stack_jets(data.train)
    n = len(y)

    def snapshot_row(epoch, seconds):
        tr = evaluate(model, data.train, cfg.eval_batch)
        va = evaluate(model, data.val, cfg.eval_batch) if data.val else None
        return EpochRecord(
            epoch=epoch,
            train_loss=tr.loss,
            val_loss=va.loss if va else math.nan,
            train_acc=tr.accuracy,
            val_acc=va.accuracy if va else math.nan,
            val_auc=va.auc if va else None,
            seconds=seconds,
        )

    start = min(cfg.checkpoint_start, cfg.epochs)
    history = [snapshot_row(0, 0.0)]
    best_epoch, best_auc, best_params = None, None, None

    def consider(rec):
        nonlocal best_epoch, best_auc, best_params
        if rec.epoch < start:
            return
        score = -math.inf if rec.val_auc is None else rec.val_auc
        if best_epoch is None or score > (-math.inf if best_auc is None else best_auc):
            best_epoch, best_auc, best_params = rec.epoch, rec.val_auc, get_flat(params)

    consider(history[0])
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = order_rng.permutation(n)
        for s in range(0, n, cfg.batch):
            idx = perm[s : s + cfg.batch]
            model.zero_grad()
            loss = model.loss(h[idx], x[idx], a[idx], y[idx])
            value = float(loss.data)
            if not math.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise TrainingDivergedError(f"loss {value!r} at epoch {epoch}, batch starting {s}")
            backward(loss)
            adam_step(params, [p.grad for p in params], state)
        rec = snapshot_row(epoch, time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_auc=%s", epoch, rec.train_loss, rec.val_loss, rec.val_auc)
        consider(rec)

    set_flat(params, best_params)
    test = evaluate(model, data.test, cfg.eval_batch)
    return TrainReport(
        model=model.name,
        n_params=count_parameters(params),
        history=history,
        best_epoch=best_epoch,
        best_val_auc=best_auc,
        test_loss=test.loss,
        test_accuracy=test.accuracy,
        test_auc=test.auc,
        roc_fpr=[] if test.fpr is None else test.fpr.tolist(),
        roc_tpr=[] if test.tpr is None else test.tpr.tolist(),
        optimizer={"name": "adam", "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps,
                   "steps": state.t},
        best_params=best_params,
    )


# ---------------------------------------------------------------------------
# checkpoint files
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    config_hash: bytes
    epoch: int
    params: np.ndarray
    config_text: str
    scale: np.ndarray


def config_hash(config_text: str) -> bytes:
    return hashlib.sha256(config_text.encode("utf-8")).digest()


def save_checkpoint(path, params: np.ndarray, epoch: int, config_text: str = "", scale=None) -> None:
    """QJCK1: magic, sha256 of the config text, epoch, counts, config text, feature scale, parameters."""
    params = np.asarray(params, dtype="<f8")
    scale = np.ones(8) if scale is None else np.asarray(scale, dtype=float)
    text = config_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, config_hash(config_text), epoch, params.size, len(text)))
        fh.write(text)
        fh.write(scale.astype("<f8").tobytes())
        fh.write(params.tobytes())


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < _CKPT_HEADER.size or blob[:5] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a QJCK1 checkpoint")
    _, digest, epoch, count, text_len = _CKPT_HEADER.unpack_from(blob)
    off = _CKPT_HEADER.size
    text = blob[off : off + text_len].decode("utf-8")
    off += text_len
    scale = np.frombuffer(blob, "<f8", 8, off).astype(float)
    off += 64
    if len(blob) - off != 8 * count:
        raise ValueError(f"{path} is truncated or has trailing bytes")
    params = np.frombuffer(blob, "<f8", count, off).astype(float)
    if digest != config_hash(text):
        raise ValueError(f"{path}: config hash does not match embedded config")
    return Checkpoint(digest, int(epoch), params, text, scale)
