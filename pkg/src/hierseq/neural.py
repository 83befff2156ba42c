"""Encoder-attention-decoder network with hand-written reverse-mode gradients.

Shapes used throughout:

    B  batch (documents, or beam hypotheses at decode time)
    N  tokens per document (padded to the longest in the batch)
    d  word-vector / class-embedding / CDV dimension
    H  GRU hidden size; encoder outputs are 2H (forward ++ backward)
    A  attention score dimension
    C  union class vocabulary size; index C is the start symbol

GRU cells follow Cho et al.: the reset gate multiplies the previous state
before the recurrent candidate projection.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .errors import DataError, NumericError


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-softmax restricted to ``mask``; masked-out entries are exactly -inf."""
    if not mask.any():
        raise ValueError("level mask selects no classes")
    x = np.where(mask, logits, -np.inf)
    top = x.max(axis=-1, keepdims=True)
    shifted = x - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int
    hidden: int
    num_classes: int
    pnc: bool = False
    attention_dim: int | None = None
    dropout: float = 0.3
    dtype: str = "float64"

    @property
    def attn(self) -> int:
        return self.attention_dim or self.hidden


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, H, C, A = cfg.embedding_dim, cfg.hidden, cfg.num_classes, cfg.attn
    shapes = {
        "cls_emb": (C + 1, d),
        "enc_f_W": (3 * H, d), "enc_f_U": (3 * H, H), "enc_f_b": (3 * H,),
        "enc_b_W": (3 * H, d), "enc_b_U": (3 * H, H), "enc_b_b": (3 * H,),
        "init_W": (H, 2 * H), "init_b": (H,),
        "att_Wh": (A, 2 * H), "att_Ws": (A, H),
    }
    if cfg.pnc:
        shapes["att_Wc"] = (A, d)
    shapes.update({
        "att_v": (A,),
        "dec_W": (3 * H, d + 2 * H), "dec_U": (3 * H, H), "dec_b": (3 * H,),
        "out_W": (C, 3 * H), "out_b": (C,),
    })
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(cfg.hidden)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=cfg.dtype)
        else:
            params[name] = rng.uniform(-bound, bound, size=shape).astype(cfg.dtype)
    return params


# -- GRU cell ----------------------------------------------------------------

def gru_forward(W, U, b, x, h, m=None):
    H = h.shape[1]
    gx = x @ W.T + b
    gh = h @ U[: 2 * H].T
    r = sigmoid(gx[:, :H] + gh[:, :H])
    z = sigmoid(gx[:, H : 2 * H] + gh[:, H:])
    rh = r * h
    n = np.tanh(gx[:, 2 * H :] + rh @ U[2 * H :].T)
    h_new = z * h + (1.0 - z) * n
    if m is not None:
        mm = m[:, None]
        h_new = mm * h_new + (1.0 - mm) * h
    return h_new, (x, h, r, z, n, rh, m)


def gru_backward(W, U, dW, dU, db, dh_out, cache, need_dx=True):
    """Accumulate parameter gradients; return (dx, dh_prev)."""
    x, h, r, z, n, rh, m = cache
    H = h.shape[1]
    if m is not None:
        mm = m[:, None]
        dh_new = dh_out * mm
        dh = dh_out * (1.0 - mm)
    else:
        dh_new = dh_out
        dh = 0.0
    dz = dh_new * (h - n)
    dn = dh_new * (1.0 - z)
    dh = dh + dh_new * z
    dan = dn * (1.0 - n * n)
    dU[2 * H :] += dan.T @ rh
    drh = dan @ U[2 * H :]
    dh = dh + drh * r
    dar = drh * h * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    da = np.concatenate([dar, daz, dan], axis=1)
    dW += da.T @ x
    db += da.sum(axis=0)
    dU[: 2 * H] += da[:, : 2 * H].T @ h
    dh = dh + da[:, : 2 * H] @ U[: 2 * H]
    dx = da @ W if need_dx else None
    return dx, dh


# -- model -----------------------------------------------------------------------

@dataclass
class Encoded:
    outputs: np.ndarray      # (B, N, 2H)
    proj: np.ndarray         # (B, N, A) encoder side of the attention energies
    mask: np.ndarray         # (B, N) 1.0 for real tokens
    initial: np.ndarray      # (B, H) first decoder state
    cache: tuple | None = None

    def repeat(self, k: int) -> "Encoded":
        """Tile a single-document encoding across ``k`` hypotheses."""
        if self.outputs.shape[0] != 1:
            raise ValueError("repeat() expects a batch of one")
        tile = lambda a: np.repeat(a, k, axis=0)  # noqa: E731
        return Encoded(tile(self.outputs), tile(self.proj), tile(self.mask), tile(self.initial))


@dataclass
class StepOutput:
    log_probs: np.ndarray    # (B, C)
    hidden: np.ndarray       # (B, H)
    context: np.ndarray      # (B, 2H)
    weights: np.ndarray      # (B, N) attention weights
    cache: tuple | None = None


def pad_words(token_lists: Sequence[Sequence[str]], table: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
    """Word vectors (B, N, d) and token mask (B, N) for a batch of documents."""
    if any(len(t) == 0 for t in token_lists):
        raise DataError("cannot encode an empty document")
    n = max(len(t) for t in token_lists)
    words = np.zeros((len(token_lists), n, table.dim))
    mask = np.zeros((len(token_lists), n))
    for i, toks in enumerate(token_lists):
        words[i, : len(toks)] = table.lookup_many(toks)
        mask[i, : len(toks)] = 1.0
    return words, mask


class Seq2SeqModel:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config
        if params is None:
            params = init_params(config, rng if rng is not None else np.random.default_rng(0))
        shapes = param_shapes(config)
        if set(params) != set(shapes):
            raise ValueError(f"parameter names {sorted(params)} do not match {sorted(shapes)}")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")
        self.params = {name: params[name] for name in shapes}

    @property
    def start_index(self) -> int:
        return self.config.num_classes

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "Seq2SeqModel":
        return Seq2SeqModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def _dropout(self, shape, rng):
        p = self.config.dropout
        if rng is None or p <= 0.0:
            return None
        return (rng.random(shape) >= p) / (1.0 - p)

    # -- encoder ---------------------------------------------------------------

    def encode(self, words: np.ndarray, mask: np.ndarray, dropout_rng=None) -> Encoded:
        P = self.params
        B, N, _ = words.shape
        H = self.config.hidden
        drop = self._dropout(words.shape, dropout_rng)
        x = words if drop is None else words * drop
        x = x.astype(self.config.dtype, copy=False)

        fwd = np.zeros((B, N, H), dtype=x.dtype)
        bwd = np.zeros((B, N, H), dtype=x.dtype)
        f_cache, b_cache = [None] * N, [None] * N
        h = np.zeros((B, H), dtype=x.dtype)
        for t in range(N):
            h, f_cache[t] = gru_forward(P["enc_f_W"], P["enc_f_U"], P["enc_f_b"], x[:, t], h, mask[:, t])
            fwd[:, t] = h
        h = np.zeros((B, H), dtype=x.dtype)
        for t in reversed(range(N)):
            h, b_cache[t] = gru_forward(P["enc_b_W"], P["enc_b_U"], P["enc_b_b"], x[:, t], h, mask[:, t])
            bwd[:, t] = h

        outputs = np.concatenate([fwd, bwd], axis=2)
        final = np.concatenate([fwd[:, N - 1], bwd[:, 0]], axis=1)
        initial = np.tanh(final @ P["init_W"].T + P["init_b"])
        proj = outputs @ P["att_Wh"].T
        _check_finite(outputs, "encoder states")
        return Encoded(outputs, proj, mask, initial, (f_cache, b_cache, final))

    # -- attention -------------------------------------------------------------

    def attend(self, enc: Encoded, hidden: np.ndarray, cond: np.ndarray | None = None):
        """Additive attention; returns (context, weights, cache).

        ``cond`` is the parent class-definition vector; it only enters the
        energies when the model was built with parent conditioning.
        """
        P = self.params
        query = hidden @ P["att_Ws"].T
        if self.config.pnc and cond is not None:
            query = query + cond @ P["att_Wc"].T
        T = np.tanh(enc.proj + query[:, None, :])
        energy = T @ P["att_v"]
        energy = np.where(enc.mask > 0, energy, -np.inf)
        energy = energy - energy.max(axis=1, keepdims=True)
        w = np.exp(energy)
        w /= w.sum(axis=1, keepdims=True)
        context = np.einsum("bn,bnk->bk", w, enc.outputs)
        return context, w, (w, T, hidden, cond)

    def _attend_backward(self, dctx, cache, enc, g, d_outputs, d_proj):
        P = self.params
        w, T, hidden, cond = cache
        d_outputs += w[:, :, None] * dctx[:, None, :]
        dw = np.einsum("bnk,bk->bn", enc.outputs, dctx)
        de = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        g["att_v"] += np.einsum("bn,bna->a", de, T)
        dpre = de[:, :, None] * P["att_v"] * (1.0 - T * T)
        d_proj += dpre
        dq = dpre.sum(axis=1)
        g["att_Ws"] += dq.T @ hidden
        if self.config.pnc and cond is not None:
            g["att_Wc"] += dq.T @ cond
        return dq @ P["att_Ws"]

    # -- decoder -----------------------------------------------------------------

    def step(self, enc: Encoded, prev: np.ndarray, hidden: np.ndarray, step_mask: np.ndarray,
             cond: np.ndarray | None = None, dropout_rng=None) -> StepOutput:
        """One decoder step. ``prev`` holds global class indices (or the start index)."""
        P = self.params
        context, w, att_cache = self.attend(enc, hidden, cond)
        u = np.concatenate([P["cls_emb"][prev], context], axis=1)
        drop = self._dropout(u.shape, dropout_rng)
        if drop is not None:
            u = u * drop
        new_hidden, gru_cache = gru_forward(P["dec_W"], P["dec_U"], P["dec_b"], u, hidden)
        _check_finite(new_hidden, "decoder state")
        out = np.concatenate([new_hidden, context], axis=1)
        logits = out @ P["out_W"].T + P["out_b"]
        _check_finite(logits, "output logits")
        log_probs = masked_log_softmax(logits, step_mask)
        cache = (prev, att_cache, drop, gru_cache, out)
        return StepOutput(log_probs, new_hidden, context, w, cache)

    def forward_loss(self, words: np.ndarray, mask: np.ndarray, targets: np.ndarray,
                     step_masks: Sequence[np.ndarray], cond_vectors: np.ndarray | None = None,
                     dropout_rng=None):
        """Teacher-forced negative log-likelihood, averaged over the batch.

        ``targets`` is (B, M) global class indices in decode order.
        ``cond_vectors`` is the (C, d) CDV matrix; with parent conditioning,
        step j > 0 is conditioned on the CDV of gold target j-1 and step 0 on zeros.
        """
        B, M = targets.shape
        if len(step_masks) != M:
            raise DataError(f"{M} targets but {len(step_masks)} step masks")
        enc = self.encode(words, mask, dropout_rng)
        hidden = enc.initial
        prev = np.full(B, self.start_index)
        d = self.config.embedding_dim
        total = 0.0
        steps = []
        for j in range(M):
            cond = None
            if self.config.pnc:
                cond = np.zeros((B, d)) if j == 0 or cond_vectors is None else cond_vectors[targets[:, j - 1]]
            out = self.step(enc, prev, hidden, step_masks[j], cond, dropout_rng)
            gold_lp = out.log_probs[np.arange(B), targets[:, j]]
            if np.any(np.isneginf(gold_lp)):
                raise DataError(f"a gold target at step {j} lies outside the step's level mask")
            total -= gold_lp.sum()
            steps.append(out)
            hidden = out.hidden
            prev = targets[:, j]
        loss = total / B
        return loss, (enc, steps, targets)

    def backward(self, cache) -> dict[str, np.ndarray]:
        P = self.params
        enc, steps, targets = cache
        B, M = targets.shape
        H, d = self.config.hidden, self.config.embedding_dim
        g = self.zero_grads()
        d_outputs = np.zeros_like(enc.outputs)
        d_proj = np.zeros_like(enc.proj)
        dh = np.zeros((B, H))
        rows = np.arange(B)
        for j in reversed(range(M)):
            prev, att_cache, drop, gru_cache, out = steps[j].cache
            dlogits = np.exp(steps[j].log_probs)
            dlogits[rows, targets[:, j]] -= 1.0
            dlogits /= B
            g["out_W"] += dlogits.T @ out
            g["out_b"] += dlogits.sum(axis=0)
            dout = dlogits @ P["out_W"]
            dh = dh + dout[:, :H]
            dctx = dout[:, H:]
            du, dh = gru_backward(P["dec_W"], P["dec_U"], g["dec_W"], g["dec_U"], g["dec_b"], dh, gru_cache)
            if drop is not None:
                du = du * drop
            dctx = dctx + du[:, d:]
            np.add.at(g["cls_emb"], prev, du[:, :d])
            dh = dh + self._attend_backward(dctx, att_cache, enc, g, d_outputs, d_proj)

        f_cache, b_cache, final = enc.cache
        dpre = dh * (1.0 - enc.initial ** 2)
        g["init_W"] += dpre.T @ final
        g["init_b"] += dpre.sum(axis=0)
        dfinal = dpre @ P["init_W"]

        A = d_proj.shape[2]
        g["att_Wh"] += d_proj.reshape(-1, A).T @ enc.outputs.reshape(-1, 2 * H)
        d_outputs += d_proj @ P["att_Wh"]

        N = d_outputs.shape[1]
        d_fwd = d_outputs[:, :, :H].copy()
        d_bwd = d_outputs[:, :, H:].copy()
        d_fwd[:, N - 1] += dfinal[:, :H]
        d_bwd[:, 0] += dfinal[:, H:]
        dh = np.zeros((B, H))
        for t in reversed(range(N)):
            _, dh = gru_backward(P["enc_f_W"], P["enc_f_U"], g["enc_f_W"], g["enc_f_U"], g["enc_f_b"],
                                 dh + d_fwd[:, t], f_cache[t], need_dx=False)
        dh = np.zeros((B, H))
        for t in range(N):
            _, dh = gru_backward(P["enc_b_W"], P["enc_b_U"], g["enc_b_W"], g["enc_b_U"], g["enc_b_b"],
                                 dh + d_bwd[:, t], b_cache[t], need_dx=False)
        return g


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path: str | Path, model: Seq2SeqModel, taxonomy_hash: str,
                    extra: dict | None = None) -> None:
    meta = {
        "format": "hierseq-checkpoint/1",
        "taxonomy_hash": taxonomy_hash,
        "model": asdict(model.config),
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[Seq2SeqModel, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "hierseq-checkpoint/1":
            raise DataError(f"{path}: not a hierseq checkpoint")
        params = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
    model = Seq2SeqModel(ModelConfig(**meta["model"]), params)
    return model, meta
