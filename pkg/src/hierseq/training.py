"""Training loop: Adam, global-norm clipping, plateau LR decay, task interleaving."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cdv import CdvStore
from .corpus import Document, SplitDataset
from .decode import greedy_decode_batch
from .embeddings import EmbeddingTable
from .errors import ConfigError, NumericError
from .metrics import evaluate
from .neural import ModelConfig, Seq2SeqModel, pad_words
from .taxonomy import FORWARD, REVERSED, Taxonomy, level_mask, reverse_path

log = logging.getLogger(__name__)

MAIN, AUX = "main", "aux"


@dataclass(frozen=True)
class TrainConfig:
    hidden_units: int = 300
    embedding_dim: int = 300
    batch_size: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_epsilon: float = 1e-9
    learning_rate: float = 0.001
    lr_decay_factor: float = 10.0
    lr_patience_epochs: int = 4
    dropout: float = 0.3
    grad_clip: float = 0.5
    clip_mode: str = "norm"
    max_epochs: int = 30
    aux_interleave_period: int = 2
    aux_start_task: str = MAIN
    aux_enabled: bool = False
    pnc_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        positive = ["hidden_units", "embedding_dim", "batch_size", "learning_rate", "lr_decay_factor",
                    "lr_patience_epochs", "grad_clip", "aux_interleave_period"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("Adam betas must be in [0, 1)")
        if self.clip_mode not in ("norm", "value"):
            raise ConfigError(f"clip_mode must be 'norm' or 'value', got {self.clip_mode!r}")
        if self.aux_start_task not in (MAIN, AUX):
            raise ConfigError(f"aux_start_task must be 'main' or 'aux', got {self.aux_start_task!r}")

    def model_config(self, num_classes: int) -> ModelConfig:
        return ModelConfig(self.embedding_dim, self.hidden_units, num_classes,
                           pnc=self.pnc_enabled, dropout=self.dropout)


def task_for_epoch(epoch: int, config: TrainConfig) -> str:
    """Task trained in 0-based ``epoch``: blocks of ``aux_interleave_period`` epochs alternate."""
    if not config.aux_enabled:
        return MAIN
    first, second = (MAIN, AUX) if config.aux_start_task == MAIN else (AUX, MAIN)
    return first if (epoch // config.aux_interleave_period) % 2 == 0 else second


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float = 0.5, mode: str = "norm"):
    """Scale all gradients by ``max_norm / norm`` when the global L2 norm exceeds it."""
    if mode == "value":
        return {k: np.clip(g, -max_norm, max_norm) for k, g in grads.items()}
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


class Adam:
    """Adam with bias correction; ``lr`` is set by the caller each step."""

    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.98, eps=1e-9):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainState:
    optimizer: Adam
    initial_lr: float
    decays: int = 0
    epoch: int = 0
    best_accuracy: float = -1.0
    epochs_since_improvement: int = 0
    task: str = MAIN
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    clipped_norms: list[float] = field(default_factory=list)
    decay_factor: float = 10.0

    @property
    def lr(self) -> float:
        # recomputed from the initial value so repeated decays do not drift
        return self.initial_lr / self.decay_factor ** self.decays


def new_state(model: Seq2SeqModel, config: TrainConfig) -> TrainState:
    opt = Adam(model.params, config.adam_beta1, config.adam_beta2, config.adam_epsilon)
    return TrainState(opt, config.learning_rate, rng=np.random.default_rng([config.seed, 2]),
                      decay_factor=config.lr_decay_factor)


def update_lr_schedule(state: TrainState, accuracy: float, config: TrainConfig) -> float:
    """Record one validation result; decay the LR after ``patience`` flat epochs."""
    if accuracy > state.best_accuracy:
        state.best_accuracy = accuracy
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement >= config.lr_patience_epochs:
            state.decays += 1
            state.epochs_since_improvement = 0
            log.info("learning rate decayed to %g", state.lr)
    return state.lr


def targets_for(documents: Sequence[Document], taxonomy: Taxonomy, task: str) -> np.ndarray:
    rows = []
    for doc in documents:
        path = reverse_path(doc.labels) if task == AUX else doc.labels
        rows.append([taxonomy.global_index(c) for c in path])
    return np.array(rows, dtype=np.int64)


def train_epoch(model: Seq2SeqModel, documents: Sequence[Document], task: str, config: TrainConfig,
                state: TrainState, table: EmbeddingTable, taxonomy: Taxonomy,
                cdv_store: CdvStore | None = None) -> float:
    """One pass over ``documents`` in a seed-determined order; returns the mean batch loss."""
    direction = REVERSED if task == AUX else FORWARD
    masks = [level_mask(taxonomy, j, direction) for j in range(taxonomy.num_levels)]
    cond = cdv_store.vectors if (cdv_store is not None and model.config.pnc) else None
    order = np.random.default_rng([config.seed, 1, state.epoch]).permutation(len(documents))
    losses = []
    for lo in range(0, len(order), config.batch_size):
        batch = [documents[i] for i in order[lo : lo + config.batch_size]]
        words, mask = pad_words([d.tokens for d in batch], table)
        targets = targets_for(batch, taxonomy, task)
        loss, cache = model.forward_loss(words, mask, targets, masks, cond, state.rng)
        if not np.isfinite(loss):
            raise NumericError(
                f"non-finite loss {loss} at epoch {state.epoch + 1}, batch {lo // config.batch_size}, "
                f"task {task}, lr {state.lr:g}"
            )
        grads = clip_gradients(model.backward(cache), config.grad_clip, config.clip_mode)
        state.clipped_norms.append(global_norm(grads))
        state.optimizer.step(model.params, grads, state.lr)
        losses.append(float(loss))
    return float(np.mean(losses)) if losses else 0.0


def validation_report(model, documents, taxonomy, table, cdv_store):
    preds = greedy_decode_batch(model, [d.tokens for d in documents], taxonomy, table, cdv_store)
    return evaluate([p.path for p in preds], [d.labels for d in documents])


@dataclass
class FitResult:
    best_model: Seq2SeqModel
    log: list[dict]
    best_epoch: int | None
    best_accuracy: float | None
    seconds: list[float]
    state: TrainState


def fit(model: Seq2SeqModel, splits: SplitDataset, config: TrainConfig, table: EmbeddingTable,
        taxonomy: Taxonomy, cdv_store: CdvStore | None = None,
        validate: Callable[[Seq2SeqModel, int], dict] | None = None,
        on_epoch: Callable[[dict], None] | None = None) -> FitResult:
    """Train for ``max_epochs`` and keep the model with the best validation path accuracy.

    Validation always decodes the main top-down task, including after
    auxiliary epochs. ``validate`` replaces the default greedy evaluation; it
    must return ``{"path_accuracy": float, "level_accuracy": [...]}``.
    """
    if model.config.pnc and cdv_store is None:
        raise ConfigError("parent conditioning needs a CDV store")
    if not splits.train or (validate is None and not splits.validation):
        raise ConfigError("training needs non-empty train and validation splits")
    state = new_state(model, config)
    best = model.copy()
    best_epoch, best_acc = None, None
    records, seconds = [], []
    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        state.epoch = epoch
        state.task = task_for_epoch(epoch, config)
        lr_used = state.lr
        train_loss = train_epoch(model, splits.train, state.task, config, state, table, taxonomy, cdv_store)
        if validate is not None:
            val = validate(model, epoch)
        else:
            report = validation_report(model, splits.validation, taxonomy, table, cdv_store)
            val = {"path_accuracy": float(report.path_accuracy),
                   "level_accuracy": [float(a) for a in report.level_accuracy]}
        acc = val["path_accuracy"]
        if best_acc is None or acc > best_acc:
            best, best_epoch, best_acc = model.copy(), epoch + 1, acc
        update_lr_schedule(state, acc, config)
        record = {
            "epoch": epoch + 1,
            "task": state.task,
            "train_loss": round(train_loss, 10),
            "val_level_accuracy": [round(a, 6) for a in val.get("level_accuracy", [])],
            "val_path_accuracy": round(acc, 6),
            "lr": lr_used,
            "next_lr": state.lr,
        }
        records.append(record)
        seconds.append(time.perf_counter() - started)
        log.info("epoch %d task=%s loss=%.4f val_path=%.4f lr=%g", epoch + 1, state.task,
                 train_loss, acc, lr_used)
        if on_epoch is not None:
            on_epoch(record)
    return FitResult(best, records, best_epoch, best_acc, seconds, state)
