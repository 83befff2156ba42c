import numpy as np

from hierseq.decode import DocumentDecoder
from hierseq.neural import ModelConfig, Seq2SeqModel
from hierseq.taxonomy import Taxonomy, build_taxonomy, level_mask


def random_taxonomy(rng, sizes):
    return build_taxonomy([[f"l{j}c{k}" for k in range(n)] for j, n in enumerate(sizes)])


def random_model(rng, d, H, C, pnc=False, scale=0.5, dropout=0.3):
    """Model with non-trivial weights and biases (init leaves biases at zero)."""
    cfg = ModelConfig(embedding_dim=d, hidden=H, num_classes=C, pnc=pnc, dropout=dropout)
    model = Seq2SeqModel(cfg, rng=rng)
    for p in model.params.values():
        p += rng.normal(0.0, scale, p.shape)
    return model


def forward_masks(taxonomy: Taxonomy):
    return [level_mask(taxonomy, j) for j in range(taxonomy.num_levels)]


def random_targets(rng, taxonomy: Taxonomy, batch):
    rows = []
    for _ in range(batch):
        rows.append([taxonomy.level_offset(j) + int(rng.integers(n))
                     for j, n in enumerate(taxonomy.level_sizes)])
    return np.array(rows)


def finite_difference_check(model, loss_fn, step=1e-5):
    """Compare analytic gradients with central differences for every parameter.

    Returns {name: norm-relative error} where the error of a tensor is
    ||analytic - numeric|| / max(||analytic||, ||numeric||) (0 when both vanish).
    """
    loss, cache = loss_fn()
    analytic = model.backward(cache)
    errors = {}
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = loss_fn()[0]
            p[idx] = orig - step
            down = loss_fn()[0]
            p[idx] = orig
            numeric[idx] = (up - down) / (2 * step)
        scale = max(np.linalg.norm(analytic[name]), np.linalg.norm(numeric))
        errors[name] = 0.0 if scale == 0 else float(np.linalg.norm(analytic[name] - numeric) / scale)
    return errors


def path_logprob(model, tax, table, store, tokens, path):
    """Score one fixed path by stepping the decoder along it."""
    dec = DocumentDecoder(model, tax, tokens, table, store)
    hidden = dec.encoded.initial
    prev = np.array([model.start_index])
    total = 0.0
    for j, g in enumerate(path):
        cond = dec.conditioning(j, prev)
        out = model.step(dec.encoded, prev, hidden, dec.masks[j], cond)
        total += float(out.log_probs[0, g])
        hidden, prev = out.hidden, np.array([g])
    return total


def brute_force(model, tax, table, store, tokens, cd=None):
    best = None
    for path in tax.level_sequences():
        g = tuple(tax.global_index(c) for c in path)
        score = path_logprob(model, tax, table, store, tokens, g)
        if cd is not None:
            score += sum(cd[c] for c in g)
        key = (-score, g)
        if best is None or key < best:
            best = key
    return best[1], -best[0]
