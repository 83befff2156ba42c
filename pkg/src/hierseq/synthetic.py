"""Generated taxonomies and corpora whose tokens determine the label path."""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .corpus import DefinitionStore, Document, write_dataset
from .embeddings import EmbeddingTable, write_vectors
from .taxonomy import ClassId, LabelPath, Taxonomy, build_taxonomy, save_taxonomy


@dataclass
class SyntheticCorpus:
    taxonomy: Taxonomy
    documents: list[Document]
    table: EmbeddingTable
    definitions: DefinitionStore


def tree_taxonomy(branching: list[int]) -> Taxonomy:
    """Balanced tree: ``branching[0]`` roots, each level-j node has ``branching[j]`` children."""
    levels = []
    edges = []
    count = branching[0]
    levels.append([f"c0_{k}" for k in range(count)])
    for j, b in enumerate(branching[1:], start=1):
        names = [f"c{j}_{k}" for k in range(count * b)]
        edges += [(levels[-1][k // b], names[k]) for k in range(len(names))]
        levels.append(names)
        count *= b
    return build_taxonomy(levels, edges)


def separable_corpus(num_parents: int = 4, children_per_parent: int = 3, num_documents: int = 2000,
                     dim: int = 10, cue_words: int = 2, noise_words: int = 20,
                     length: tuple[int, int] = (4, 8), cue_fraction: float = 0.5,
                     seed: int = 0) -> SyntheticCorpus:
    """Two-level corpus; each leaf owns ``cue_words`` tokens.

    About ``cue_fraction`` of every document's tokens (at least one) are cues of
    its leaf, the rest are shared noise words. The parent is implied by the leaf, so the label path is a deterministic
    function of the tokens.
    """
    rng = np.random.default_rng(seed)
    taxonomy = tree_taxonomy([num_parents, children_per_parent])
    leaves = taxonomy.level_sizes[1]
    cues = [[f"cue{leaf}_{i}" for i in range(cue_words)] for leaf in range(leaves)]
    noise = [f"noise{i}" for i in range(noise_words)]
    vocab = [w for ws in cues for w in ws] + noise
    table = EmbeddingTable(vocab, rng.normal(size=(len(vocab), dim)))

    documents = []
    for i in range(num_documents):
        leaf = int(rng.integers(leaves))
        n = int(rng.integers(length[0], length[1] + 1))
        n_cue = n if not noise else max(1, int(round(cue_fraction * n)))
        tokens = [cues[leaf][int(t)] for t in rng.integers(cue_words, size=n_cue)]
        tokens += [noise[int(t)] for t in rng.integers(max(noise_words, 1), size=n - n_cue)]
        tokens = [tokens[int(t)] for t in rng.permutation(n)]
        path = LabelPath((ClassId(0, leaf // children_per_parent), ClassId(1, leaf)))
        documents.append(Document(f"doc{i}", tuple(tokens), path))

    defs = {}
    for leaf in range(leaves):
        defs[ClassId(1, leaf)] = " ".join(cues[leaf])
    for p in range(num_parents):
        kids = range(p * children_per_parent, (p + 1) * children_per_parent)
        defs[ClassId(0, p)] = " ".join(w for k in kids for w in cues[k])
    return SyntheticCorpus(taxonomy, documents, table, DefinitionStore(defs, []))


def random_table(tokens: list[str], dim: int, rng: np.random.Generator) -> EmbeddingTable:
    return EmbeddingTable(tokens, rng.normal(size=(len(tokens), dim)))


def write_corpus_files(corpus: SyntheticCorpus, directory: str | Path, hidden_units: int = 64,
                       max_epochs: int = 30, seed: int = 13) -> Path:
    """Write taxonomy, data, vectors, definitions and a run config; returns the config path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tax = corpus.taxonomy
    save_taxonomy(tax, out / "taxonomy.yaml")
    write_dataset(out / "data.tsv", corpus.documents, tax)
    write_vectors(corpus.table, out / "vectors.txt")
    with open(out / "definitions.tsv", "w", encoding="utf-8") as fh:
        for cid in tax.all_classes():
            text = corpus.definitions.get(cid)
            if text is not None:
                fh.write(f"{cid.level}\t{tax.name(cid)}\t{text}\n")
    config = {
        "config_version": 1,
        "seed": seed,
        "paths": {"taxonomy": "taxonomy.yaml", "dataset": "data.tsv", "embeddings": "vectors.txt",
                  "definitions": "definitions.tsv", "output_dir": "out"},
        "split_ratios": [0.8, 0.1, 0.1],
        "strategies": {"aux_enabled": False, "pnc_enabled": False, "decode_mode": "greedy"},
        "train": {"hidden_units": hidden_units, "embedding_dim": corpus.table.dim, "max_epochs": max_epochs},
        "decode": {"beam_size": 5, "lam": 1.0},
    }
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=False)
    return out / "config.yaml"


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="Write a separable synthetic corpus and run config.")
    parser.add_argument("directory")
    parser.add_argument("--documents", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    path = write_corpus_files(separable_corpus(num_documents=args.documents, seed=args.seed), args.directory)
    print(path)


if __name__ == "__main__":
    main()
