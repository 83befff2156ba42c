"""Command-line entry point: ``hierseq <command> --config run.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .cdv import CdvStore, build_cdv_store, save_cdv_store
from .config import RunConfig, check_files, load_config
from .corpus import SplitDataset, load_dataset, load_definitions, read_unlabelled, split
from .decode import decode_many
from .embeddings import EmbeddingTable, load_vectors
from .errors import ConfigError, DataError, HierSeqError
from .metrics import evaluate
from .neural import Seq2SeqModel, load_checkpoint, save_checkpoint
from .taxonomy import Taxonomy, load_taxonomy
from .training import fit

log = logging.getLogger("hierseq")


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_table(cfg: RunConfig) -> EmbeddingTable:
    return load_vectors(cfg.paths.embeddings, cfg.embeddings_limit)


def _load_splits(cfg: RunConfig, taxonomy: Taxonomy) -> tuple[SplitDataset, list]:
    """Documents per split plus (file, line, reason) rejections."""
    rejected = []
    if cfg.paths.dataset:
        result = load_dataset(cfg.paths.dataset, taxonomy)
        rejected += [(cfg.paths.dataset, n, r) for n, r in result.rejected]
        return split(result.documents, cfg.split_ratios, cfg.seed), rejected
    parts = []
    for name in ("train", "validation", "test"):
        path = getattr(cfg.paths, name)
        if path is None:
            raise ConfigError("give either paths.dataset or all of paths.train/validation/test")
        result = load_dataset(path, taxonomy)
        rejected += [(path, n, r) for n, r in result.rejected]
        parts.append(result.documents)
    return SplitDataset(*parts), rejected


def _dataset_files(cfg: RunConfig) -> list[str]:
    return ["dataset"] if cfg.paths.dataset else ["train", "validation", "test"]


def _cdv_store(cfg: RunConfig, taxonomy: Taxonomy, table: EmbeddingTable) -> CdvStore | None:
    if cfg.paths.definitions is None:
        return None
    defs = load_definitions(cfg.paths.definitions, taxonomy)
    return build_cdv_store(taxonomy, defs, table, cfg.mean_denominator)


def _needs_cdv(cfg: RunConfig, model_pnc: bool) -> bool:
    return model_pnc or cfg.decode_config().mode == "adapted_beam"


# -- commands ------------------------------------------------------------------

def cmd_data_validate(cfg: RunConfig) -> dict:
    check_files(cfg, ["taxonomy", "embeddings"] + _dataset_files(cfg))
    taxonomy = load_taxonomy(cfg.paths.taxonomy)
    table = _load_table(cfg)
    splits, rejected = _load_splits(cfg, taxonomy)
    docs = splits.train + splits.validation + splits.test
    tokens = [t for d in docs for t in d.tokens]
    oov = sum(t not in table for t in tokens)
    report = {
        "levels": list(taxonomy.level_sizes),
        "documents": {"train": len(splits.train), "validation": len(splits.validation),
                      "test": len(splits.test)},
        "rejected": [{"file": str(f), "line": n, "reason": r} for f, n, r in rejected],
        "oov_rate": round(oov / len(tokens), 6) if tokens else 0.0,
        "embedding_vocabulary": len(table),
        "missing_definitions": None,
    }
    if cfg.paths.definitions is not None:
        defs = load_definitions(cfg.paths.definitions, taxonomy)
        report["missing_definitions"] = [taxonomy.qualified_name(c) for c in defs.missing]
    (_out_dir(cfg) / "validation.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def cmd_cdv_build(cfg: RunConfig) -> dict:
    check_files(cfg, ["taxonomy", "embeddings", "definitions"])
    taxonomy = load_taxonomy(cfg.paths.taxonomy)
    store = _cdv_store(cfg, taxonomy, _load_table(cfg))
    path = _out_dir(cfg) / "cdv.tsv"
    save_cdv_store(store, path)
    missing = [taxonomy.qualified_name(taxonomy.class_at(g))
               for g in np.flatnonzero(~store.has_definition)]
    return {"cdv_store": str(path), "classes": taxonomy.num_classes, "missing_definitions": missing}


def cmd_train(cfg: RunConfig) -> dict:
    check_files(cfg, ["taxonomy", "embeddings"] + _dataset_files(cfg))
    tcfg = cfg.train_config()
    taxonomy = load_taxonomy(cfg.paths.taxonomy)
    table = _load_table(cfg)
    if table.dim != tcfg.embedding_dim:
        raise ConfigError(f"train.embedding_dim={tcfg.embedding_dim} but vectors have dimension {table.dim}")
    splits, _ = _load_splits(cfg, taxonomy)
    store = None
    if tcfg.pnc_enabled:
        check_files(cfg, ["definitions"])
        store = _cdv_store(cfg, taxonomy, table)
    out = _out_dir(cfg)
    model = Seq2SeqModel(tcfg.model_config(taxonomy.num_classes),
                         rng=np.random.default_rng([cfg.seed, 0]))
    checksum = table.checksum()
    result = fit(model, splits, tcfg, table, taxonomy, store)
    if table.checksum() != checksum:
        raise HierSeqError("embedding table changed during training")
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(_dumps(record) + "\n")
    # wall-clock lives apart from the log so reruns give byte-identical logs
    with open(out / "timing.jsonl", "w", encoding="utf-8") as fh:
        for epoch, secs in enumerate(result.seconds, start=1):
            fh.write(_dumps({"epoch": epoch, "seconds": round(secs, 3)}) + "\n")
    save_checkpoint(out / "model.npz", result.best_model, taxonomy.fingerprint(),
                    {"best_epoch": result.best_epoch, "best_val_path_accuracy": result.best_accuracy,
                     "train": cfg.train})
    if store is not None:
        save_cdv_store(store, out / "cdv.tsv")
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    return {"checkpoint": str(out / "model.npz"), "best_epoch": result.best_epoch,
            "best_val_path_accuracy": result.best_accuracy, "epochs": len(result.log),
            "parameters": model.num_parameters()}


def _load_model(cfg: RunConfig, checkpoint: str | None, taxonomy: Taxonomy) -> Seq2SeqModel:
    path = Path(checkpoint) if checkpoint else Path(cfg.paths.output_dir) / "model.npz"
    if not path.exists():
        raise ConfigError(f"checkpoint {path} does not exist")
    model, meta = load_checkpoint(path)
    if meta["taxonomy_hash"] != taxonomy.fingerprint():
        raise ConfigError(f"checkpoint {path} was trained on a different taxonomy")
    return model


def _decode_setup(cfg: RunConfig, checkpoint: str | None):
    check_files(cfg, ["taxonomy", "embeddings"])
    taxonomy = load_taxonomy(cfg.paths.taxonomy)
    table = _load_table(cfg)
    model = _load_model(cfg, checkpoint, taxonomy)
    store = None
    if _needs_cdv(cfg, model.config.pnc):
        check_files(cfg, ["definitions"])
        store = _cdv_store(cfg, taxonomy, table)
    return taxonomy, table, model, store


def cmd_eval(cfg: RunConfig, checkpoint: str | None = None) -> dict:
    check_files(cfg, _dataset_files(cfg))
    taxonomy, table, model, store = _decode_setup(cfg, checkpoint)
    dcfg = cfg.decode_config()
    splits, _ = _load_splits(cfg, taxonomy)
    preds = decode_many(model, splits.test, taxonomy, table, store, dcfg, cfg.workers)
    report = evaluate([p.path for p in preds], [d.labels for d in splits.test])
    out = _out_dir(cfg)
    violations = _edge_violations(taxonomy, preds)
    text = report.render(taxonomy)
    if violations is not None:
        text += f"edge_violations\t{violations}\n"
    (out / f"eval_{dcfg.mode}.txt").write_text(text, encoding="utf-8")
    summary = {"split": "test", "mode": dcfg.mode, "beam_size": dcfg.beam_size, **report.summary(),
               "edge_violations": violations}
    (out / f"eval_{dcfg.mode}.jsonl").write_text(_dumps(summary) + "\n", encoding="utf-8")
    _write_predictions(out / f"test_predictions_{dcfg.mode}.jsonl", splits.test, preds, taxonomy, dcfg)
    return summary


def _edge_valid(taxonomy: Taxonomy, path) -> bool | None:
    # decoding is unconstrained by edges, so report consistency instead of enforcing it
    if taxonomy.edges is None:
        return None
    return not taxonomy.path_errors(path)


def _edge_violations(taxonomy: Taxonomy, preds) -> int | None:
    if taxonomy.edges is None:
        return None
    return sum(not _edge_valid(taxonomy, p.path) for p in preds)


def _write_predictions(path, docs, preds, taxonomy, dcfg) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc, pred in zip(docs, preds):
            record = {
                "id": doc.id,
                "path": taxonomy.path_names(pred.path),
                "step_logprobs": pred.step_logprobs,
                "cum_logprob": pred.cum_logprob,
                "fused_score": pred.fused_score,
                "edge_valid": _edge_valid(taxonomy, pred.path),
            }
            if dcfg.mode == "adapted_beam":
                record["step_cd"] = pred.step_cd
            fh.write(_dumps(record) + "\n")


def cmd_predict(cfg: RunConfig, checkpoint: str | None, input_path: str,
                output: str | None = None) -> dict:
    taxonomy, table, model, store = _decode_setup(cfg, checkpoint)
    dcfg = cfg.decode_config()
    result = read_unlabelled(input_path)
    for lineno, reason in result.rejected:
        log.warning("%s:%d rejected: %s", input_path, lineno, reason)
    preds = decode_many(model, result.documents, taxonomy, table, store, dcfg, cfg.workers)
    path = Path(output) if output else _out_dir(cfg) / "predictions.jsonl"
    _write_predictions(path, result.documents, preds, taxonomy, dcfg)
    return {"predictions": str(path), "count": len(preds),
            "rejected": [{"line": n, "reason": r} for n, r in result.rejected]}


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration (YAML)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="override paths.output_dir")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field, e.g. --set train.max_epochs=5")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hierseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("data-validate", parents=[common], help="check taxonomy, data and definitions")
    sub.add_parser("cdv-build", parents=[common], help="write class-definition vectors")
    sub.add_parser("train", parents=[common], help="train and keep the best validation checkpoint")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint")
    p = sub.add_parser("predict", parents=[common], help="label an unlabelled file")
    p.add_argument("--checkpoint")
    p.add_argument("--input", required=True, help="lines of 'id<TAB>text' or bare text")
    p.add_argument("--output")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.paths.output_dir = str(Path(args.out).resolve())
        if args.command == "data-validate":
            result = cmd_data_validate(cfg)
        elif args.command == "cdv-build":
            result = cmd_cdv_build(cfg)
        elif args.command == "train":
            result = cmd_train(cfg)
        elif args.command == "eval":
            result = cmd_eval(cfg, args.checkpoint)
        else:
            result = cmd_predict(cfg, args.checkpoint, args.input, args.output)
    except HierSeqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
