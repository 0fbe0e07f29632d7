"""Answer-quality evaluation and the latency/effectiveness benchmark grid."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import QaExample
from .metrics import bleu4, exact_match, rouge_l, token_f1
from .pipeline import AnswerResult, CascadePipeline


@dataclass
class MetricReport:
    """Per-question metric values plus their arithmetic means."""

    count: int
    per_question: list[dict]
    aggregates: dict[str, float]

    def to_json(self) -> dict:
        return {"count": self.count, "aggregates": self.aggregates, "per_question": self.per_question}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def score_answer(prediction: str, golds: Sequence[str]) -> dict[str, float]:
    return {
        "em": exact_match(prediction, golds),
        "f1": token_f1(prediction, golds),
        "bleu4": bleu4([prediction], [list(golds)]) if golds else 0.0,
        "rouge_l": rouge_l(prediction, golds),
    }


def run_eval(pipeline: CascadePipeline, dataset: Iterable[QaExample]) -> MetricReport:
    """Answer every question with the full cascade and aggregate the metrics."""
    examples = list(dataset)
    if not examples:
        raise ValueError("empty evaluation dataset")
    pipeline.require("stats", "doc_ranker", "para_ranker", "reader")
    per_question = []
    for ex in examples:
        result = pipeline.answer_example(ex)
        row = {"qid": ex.qid, "answer": result.answer}
        row.update(score_answer(result.answer, ex.gold_answers))
        per_question.append(row)
    metric_names = ("em", "f1", "bleu4", "rouge_l")
    aggregates = {name: float(np.mean([row[name] for row in per_question])) for name in metric_names}
    return MetricReport(count=len(examples), per_question=per_question, aggregates=aggregates)


@dataclass
class LatencyCell:
    mean_batch_s: float
    std_batch_s: float
    quality: float
    stage_ms: dict[str, float]


@dataclass
class LatencyReport:
    """Wall time and quality per (K, N) cell, plus stage timing means."""

    batch_size: int
    repetitions: int
    quality_metric: str
    cells: dict[tuple[int, int], LatencyCell] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "repetitions": self.repetitions,
            "quality_metric": self.quality_metric,
            "cells": [
                {
                    "k": k,
                    "n": n,
                    "mean_batch_s": cell.mean_batch_s,
                    "std_batch_s": cell.std_batch_s,
                    "quality": cell.quality,
                    "stage_ms": cell.stage_ms,
                }
                for (k, n), cell in sorted(self.cells.items())
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    def to_table(self) -> str:
        header = f"{'Docs':>4}  {'Paras':>5}  {'Time(s)/batch':>13}  {'Std':>8}  {self.quality_metric:>10}"
        lines = [header, "-" * len(header)]
        for (k, n), cell in sorted(self.cells.items()):
            lines.append(
                f"{k:>4}  {n:>5}  {cell.mean_batch_s:>13.4f}  {cell.std_batch_s:>8.4f}  {cell.quality:>10.4f}"
            )
        return "\n".join(lines)


QUALITY_FNS = {
    "em": exact_match,
    "token_f1": token_f1,
    "rouge_l": rouge_l,
}


def bench_latency(
    pipeline: CascadePipeline,
    dataset: Sequence[QaExample],
    k_values: Sequence[int] = (1, 2, 3, 4, 5),
    n_values: Sequence[int] = (1, 2, 3),
    batch_size: int = 8,
    repetitions: int = 5,
    quality_metric: str = "token_f1",
) -> LatencyReport:
    """Measure mean per-batch wall time and quality for every (K, N) cell.

    One warm-up batch runs before timing starts; per-stage wall times are
    averaged over all timed requests of a cell.
    """
    pipeline.require("stats", "doc_ranker", "para_ranker", "reader")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    examples = list(dataset)[:batch_size]
    if not examples:
        raise ValueError("empty benchmark dataset")
    quality_fn = QUALITY_FNS[quality_metric]

    # warm-up, excluded from every measurement
    for ex in examples:
        pipeline.answer_example(ex, k=max(k_values), n=max(n_values))

    report = LatencyReport(batch_size=len(examples), repetitions=repetitions, quality_metric=quality_metric)
    for k in k_values:
        for n in n_values:
            times = []
            stage_sums = {"doc_rank_ms": 0.0, "para_rank_ms": 0.0, "read_ms": 0.0}
            results: list[AnswerResult] = []
            for rep in range(repetitions):
                t0 = time.perf_counter()
                results = [pipeline.answer_example(ex, k=k, n=n) for ex in examples]
                times.append(time.perf_counter() - t0)
                for result in results:
                    for name in stage_sums:
                        stage_sums[name] += result.timings_ms[name]
            quality = float(np.mean([quality_fn(r.answer, ex.gold_answers) for r, ex in zip(results, examples)]))
            n_requests = repetitions * len(examples)
            report.cells[(k, n)] = LatencyCell(
                mean_batch_s=float(np.mean(times)),
                std_batch_s=float(np.std(times)),
                quality=quality,
                stage_ms={name: total / n_requests for name, total in stage_sums.items()},
            )
    return report
