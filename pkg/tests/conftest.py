"""Shared fixtures: a small planted-answer workspace trained once per session."""

import json
from dataclasses import dataclass
from pathlib import Path

import pytest

from cascade_qa.cli import run_command
from cascade_qa.config import load_config
from cascade_qa.pipeline import load_pipeline
from cascade_qa.synth import generate_corpus, write_jsonl


@dataclass
class Workspace:
    root: Path
    config_path: Path
    records: list
    plants: list

    @property
    def config(self):
        return load_config(self.config_path)


def make_config(root: Path, **overrides) -> dict:
    config = {
        "version": 1,
        "seed": 0,
        "k_documents": 2,
        "n_paragraphs": 2,
        "max_paragraph_words": 14,
        "serve_port": 8131,
        "paths": {
            "train": str(root / "train.jsonl"),
            "dev": str(root / "dev.jsonl"),
            "test": str(root / "train.jsonl"),
            "stats": str(root / "stats.json"),
            "doc_ranker": str(root / "doc_ranker.json"),
            "para_ranker": str(root / "para_ranker.json"),
            "reader": str(root / "reader.npz"),
        },
        "reader": {
            "hidden_size": 12,
            "word_emb_size": 12,
            "char_emb_size": 6,
            "char_filters": 6,
            "char_width": 5,
            "batch_size": 8,
            "learning_rate": 0.003,
            "max_span_len": 4,
        },
        "train": {"aux_epochs": 5, "joint_epochs": 50, "patience": None, "dev_metric": "em"},
        "doc_ranker": {"epochs": 200},
        "para_ranker": {"rounds": 30, "max_depth": 3},
        "bench": {"k_values": [1, 2], "n_values": [1, 2], "batch_size": 4, "repetitions": 2, "metric": "em"},
    }
    config.update(overrides)
    return config


@pytest.fixture(scope="session")
def workspace(tmp_path_factory) -> Workspace:
    """Synthetic corpus plus a full set of checkpoints trained via the CLI."""
    root = tmp_path_factory.mktemp("workspace")
    records, plants = generate_corpus(n_questions=16, n_docs=3, paras_per_doc=2, para_len=10, seed=11)
    write_jsonl(records, root / "train.jsonl")
    write_jsonl(records[:6], root / "dev.jsonl")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(make_config(root)))

    for command in ("stats", "train-doc-ranker", "train-para-ranker", "train-reader"):
        code = run_command([command, "--config", str(config_path)])
        assert code == 0, f"{command} failed"
    return Workspace(root=root, config_path=config_path, records=records, plants=plants)


@pytest.fixture(scope="session")
def trained_pipeline(workspace):
    return load_pipeline(workspace.config)
