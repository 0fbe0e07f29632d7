"""End-to-end cascade: preprocessing, ranking stages and the reader.

Training helpers build feature rows and reader inputs from labeled data;
:class:`CascadePipeline` holds the trained components and answers one
question at a time, reporting per-stage wall times.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import Document, QaExample, distant_label, load_dataset, parse_record, restructure_paragraphs
from .features import CorpusStats, build_corpus_stats
from .rankers import (
    LinearRanker,
    RankedCandidates,
    TreeEnsemble,
    document_features,
    paragraph_features,
    rank_documents,
    rank_paragraphs,
)
from .reader import (
    ReaderConfig,
    ReaderExample,
    Vocabulary,
    build_reader_example,
    forward_example,
    load_reader_checkpoint,
    predict_answer,
)


class PipelineError(RuntimeError):
    """A pipeline component is missing or unusable."""


def preprocess(example: QaExample, max_paragraph_words: int = 600) -> QaExample:
    """Merge short consecutive paragraphs; the canonical form everywhere else."""
    return QaExample(
        qid=example.qid,
        question=example.question,
        question_type=example.question_type,
        documents=[restructure_paragraphs(doc, max_paragraph_words) for doc in example.documents],
        gold_answers=example.gold_answers,
    )


def load_examples(path: str | Path, max_paragraph_words: int = 600) -> list[QaExample]:
    return [preprocess(ex, max_paragraph_words) for ex in load_dataset(path)]


def corpus_stats_from_examples(examples: Iterable[QaExample]) -> CorpusStats:
    docs: list[Document] = []
    for ex in examples:
        docs.extend(ex.documents)
    return build_corpus_stats(docs)


def doc_ranker_rows(examples: Sequence[QaExample], stats: CorpusStats):
    """(features, label) rows over every candidate document of labeled examples."""
    rows = []
    for ex in examples:
        if not ex.gold_answers:
            continue
        labels = distant_label(ex)
        for doc, label in zip(ex.documents, labels.doc_labels):
            rows.append((document_features(ex, doc, stats), label))
    return rows


def para_ranker_rows(
    examples: Sequence[QaExample],
    stats: CorpusStats,
    doc_ranker: LinearRanker,
    k: int = 4,
):
    """(features, label) rows over prefiltered paragraphs of the top-K documents."""
    from .features import prefilter_paragraphs

    rows = []
    for ex in examples:
        if not ex.gold_answers:
            continue
        labels = distant_label(ex)
        ranked = rank_documents(ex, doc_ranker, stats, k)
        by_id = {doc.doc_id: (pos, doc) for pos, doc in enumerate(ex.documents)}
        for doc_id, _ in ranked:
            pos, doc = by_id[doc_id]
            for idx in prefilter_paragraphs(ex.question, doc):
                rows.append((paragraph_features(ex, doc, idx, stats), labels.para_labels[pos][idx]))
    return rows


def build_vocab(examples: Iterable[QaExample]) -> Vocabulary:
    def streams():
        for ex in examples:
            yield ex.question.tokens
            for doc in ex.documents:
                yield doc.title.tokens
                for para in doc.paragraphs:
                    yield para.tokens

    return Vocabulary.build(streams())


def select_candidates(
    example: QaExample,
    stats: CorpusStats,
    doc_ranker: LinearRanker,
    para_ranker: TreeEnsemble,
    k: int,
    n: int,
) -> tuple[list[tuple[Document, list[int]]], RankedCandidates]:
    """Cascade selection: top-K documents, then top-N paragraphs within each."""
    ranked_docs = rank_documents(example, doc_ranker, stats, k)
    ranked_paras = rank_paragraphs(example, ranked_docs, para_ranker, stats, n)
    by_id = {doc.doc_id: doc for doc in example.documents}
    selected = []
    for doc_id, _ in ranked_docs:
        para_indices = ranked_paras[doc_id].ids()
        selected.append((by_id[doc_id], para_indices))
    return selected, ranked_docs


def prepare_reader_example(
    example: QaExample,
    stats: CorpusStats,
    doc_ranker: LinearRanker,
    para_ranker: TreeEnsemble,
    vocab: Vocabulary,
    k: int = 4,
    n: int = 2,
    with_labels: bool = True,
) -> ReaderExample:
    """Cascade-select text and attach supervision labels in selection coordinates."""
    selected, ranked_docs = select_candidates(example, stats, doc_ranker, para_ranker, k, n)
    rex = build_reader_example(example.qid, example.question, selected, vocab, example.gold_answers)
    if with_labels and example.gold_answers:
        doc_pos = {doc.doc_id: pos for pos, doc in enumerate(example.documents)}
        order = [doc_pos[doc_id] for doc_id, _ in ranked_docs]
        order += [p for p in range(len(example.documents)) if p not in order]
        labels = distant_label(example, doc_order=order)
        selected_ids = {doc.doc_id for doc, _ in selected}
        rex.doc_labels = [labels.doc_labels[doc_pos[doc.doc_id]] for doc, _ in selected]
        rex.para_labels = [
            [labels.para_labels[doc_pos[doc.doc_id]][idx] for idx in sorted(para_indices)]
            for doc, para_indices in selected
        ]
        if labels.gold_span is not None:
            di, pi, start, end = labels.gold_span
            doc_id = example.documents[di].doc_id
            if doc_id in selected_ids:
                rex.gold_span = rex.global_span(doc_id, pi, start, end)
    return rex


@dataclass
class AnswerResult:
    answer: str
    score: float
    doc_id: str
    para_index: int
    span: tuple[int, int]
    timings_ms: dict[str, float] = field(default_factory=dict)
    golds: list[str] = field(default_factory=list)


@dataclass
class CascadePipeline:
    """Trained components plus the single-question answer path."""

    stats: Optional[CorpusStats] = None
    doc_ranker: Optional[LinearRanker] = None
    para_ranker: Optional[TreeEnsemble] = None
    reader_store: Optional[ad.ParameterStore] = None
    reader_config: Optional[ReaderConfig] = None
    vocab: Optional[Vocabulary] = None
    k: int = 4
    n: int = 2
    max_paragraph_words: int = 600

    def require(self, *components: str) -> None:
        names = {
            "stats": self.stats,
            "doc_ranker": self.doc_ranker,
            "para_ranker": self.para_ranker,
            "reader": self.reader_store,
        }
        for component in components:
            if names[component] is None:
                raise PipelineError(f"{component} is not loaded")

    def answer_example(self, example: QaExample, k: Optional[int] = None, n: Optional[int] = None) -> AnswerResult:
        """Run the full cascade on one (raw, unrestructured) example."""
        self.require("stats", "doc_ranker", "para_ranker", "reader")
        k = self.k if k is None else k
        n = self.n if n is None else n

        t_start = time.perf_counter()
        example = preprocess(example, self.max_paragraph_words)
        ranked_docs = rank_documents(example, self.doc_ranker, self.stats, k)
        t_docs = time.perf_counter()
        ranked_paras = rank_paragraphs(example, ranked_docs, self.para_ranker, self.stats, n)
        t_paras = time.perf_counter()

        by_id = {doc.doc_id: doc for doc in example.documents}
        selected = [(by_id[doc_id], ranked_paras[doc_id].ids()) for doc_id, _ in ranked_docs]
        rex = build_reader_example(example.qid, example.question, selected, self.vocab, example.gold_answers)
        with ad.no_grad():
            fw = forward_example(self.reader_store, self.reader_config, rex, with_losses=False)
        prediction = predict_answer(fw.outputs(), self.reader_config.max_span_len)
        answer = rex.answer_text(prediction.start, prediction.end)
        t_read = time.perf_counter()

        timings = {
            "doc_rank_ms": (t_docs - t_start) * 1000.0,
            "para_rank_ms": (t_paras - t_docs) * 1000.0,
            "read_ms": (t_read - t_paras) * 1000.0,
            "total_ms": (t_read - t_start) * 1000.0,
        }
        return AnswerResult(
            answer=answer,
            score=prediction.score,
            doc_id=prediction.doc_id,
            para_index=prediction.para_index,
            span=(prediction.start, prediction.end),
            timings_ms=timings,
            golds=list(example.gold_answers),
        )

    def answer_payload(self, question: str, documents: list[dict]) -> AnswerResult:
        """Service entry point: answer a question over request-supplied documents."""
        record = {"qid": "request", "question": question, "documents": documents}
        return self.answer_example(parse_record(record))


def load_pipeline(config) -> CascadePipeline:
    """Load every checkpoint referenced by a :class:`~cascade_qa.config.PipelineConfig`."""
    stats_path = config.require_path("stats", must_exist=True)
    doc_path = config.require_path("doc_ranker", must_exist=True)
    para_path = config.require_path("para_ranker", must_exist=True)
    reader_path = config.require_path("reader", must_exist=True)
    stats = CorpusStats.from_json(json.loads(Path(stats_path).read_text()))
    doc_ranker = LinearRanker.load(doc_path)
    para_ranker = TreeEnsemble.load(para_path)
    store, reader_config, vocab, _stage = load_reader_checkpoint(reader_path)
    return CascadePipeline(
        stats=stats,
        doc_ranker=doc_ranker,
        para_ranker=para_ranker,
        reader_store=store,
        reader_config=reader_config,
        vocab=vocab,
        k=config.k_documents,
        n=config.n_paragraphs,
        max_paragraph_words=config.max_paragraph_words,
    )
