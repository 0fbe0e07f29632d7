"""Statistical and structural features for the cascade ranking stages.

Document relevance is measured with BM25 (k1=1.2, b=0.75, smoothed idf),
an idf-weighted tf cosine and the question-word recall ratio; paragraph
ranking additionally sees positional/length features and an optional
question-type one-hot.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Document, TokenizedText

BM25_K1 = 1.2
BM25_B = 0.75

ENGLISH_STOPWORDS = frozenset(
    """a an the and or but if then than so of in on at to from by with for as is are
    was were be been being am do does did have has had will would can could shall
    should may might must this that these those it its he she they them his her
    their we you i me my your our us not no nor what which who whom when where why
    how there here""".split()
)

CHINESE_STOPWORDS = frozenset(
    "的 了 是 在 我 有 和 就 不 人 都 一 上 也 很 到 说 要 去 你 会 着 看 好 这 那 "
    "吗 呢 吧 啊 被 把 让 从 对 向 与 及 或 等 们 之 其 为 以 于 而 但 并 个".split()
)

STOPWORDS = ENGLISH_STOPWORDS | CHINESE_STOPWORDS

RELEVANCE_SCHEMA = ("bm25", "tfidf_cosine", "recall_ratio", "unit_len", "question_len")

DEFAULT_QTYPES = ("description", "entity", "yes_no")


class FeatureSchemaError(ValueError):
    """Feature vectors with different schemas were combined."""


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-order feature values with an attached name schema."""

    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.schema),):
            raise FeatureSchemaError(f"{values.shape[0] if values.ndim == 1 else values.shape} values for {len(self.schema)} schema names")
        if not np.all(np.isfinite(values)):
            raise FeatureSchemaError("non-finite feature value")

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        return FeatureVector(np.concatenate([self.values, other.values]), self.schema + other.schema)


def stack_features(rows: Sequence[FeatureVector]) -> np.ndarray:
    """Stack feature vectors into a matrix, enforcing a single schema."""
    if not rows:
        raise ValueError("no feature rows")
    schema = rows[0].schema
    for fv in rows[1:]:
        if fv.schema != schema:
            raise FeatureSchemaError(f"mixed schemas {schema} vs {fv.schema}")
    return np.stack([fv.values for fv in rows])


@dataclass
class CorpusStats:
    """Document frequencies and length averages for one dataset split."""

    doc_count: int
    doc_freq: dict[str, int]
    avg_doc_len: float
    avg_para_len: float

    def idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def to_json(self) -> dict:
        return {
            "version": 1,
            "doc_count": self.doc_count,
            "avg_doc_len": self.avg_doc_len,
            "avg_para_len": self.avg_para_len,
            "doc_freq": self.doc_freq,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CorpusStats":
        if data.get("version") != 1:
            raise ValueError(f"unsupported stats version {data.get('version')!r}")
        return cls(
            doc_count=int(data["doc_count"]),
            doc_freq={str(k): int(v) for k, v in data["doc_freq"].items()},
            avg_doc_len=float(data["avg_doc_len"]),
            avg_para_len=float(data["avg_para_len"]),
        )


def document_tokens(doc: Document) -> list[str]:
    """Title and body tokens concatenated, the unit the document ranker sees."""
    tokens = list(doc.title.tokens)
    for para in doc.paragraphs:
        tokens.extend(para.tokens)
    return tokens


def build_corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    """Count document frequencies over unique tokens per document."""
    doc_freq: Counter[str] = Counter()
    n_docs = 0
    total_doc_len = 0
    total_para_len = 0
    n_paras = 0
    for doc in docs:
        tokens = document_tokens(doc)
        n_docs += 1
        total_doc_len += len(tokens)
        for para in doc.paragraphs:
            n_paras += 1
            total_para_len += len(para)
        doc_freq.update(set(tokens))
    if n_docs == 0:
        raise ValueError("empty corpus")
    return CorpusStats(
        doc_count=n_docs,
        doc_freq=dict(doc_freq),
        avg_doc_len=total_doc_len / n_docs,
        avg_para_len=total_para_len / n_paras if n_paras else 0.0,
    )


def _bm25(question_tokens: Sequence[str], unit_tokens: Sequence[str], stats: CorpusStats, avg_len: float) -> float:
    tf = Counter(unit_tokens)
    length_ratio = len(unit_tokens) / avg_len if avg_len > 0 else 1.0
    denom_norm = BM25_K1 * (1.0 - BM25_B + BM25_B * length_ratio)
    score = 0.0
    for term in sorted(set(question_tokens)):
        f = tf.get(term, 0)
        if f == 0:
            continue
        score += stats.idf(term) * f * (BM25_K1 + 1.0) / (f + denom_norm)
    return score


def _tfidf_cosine(question_tokens: Sequence[str], unit_tokens: Sequence[str], stats: CorpusStats) -> float:
    q_tf = Counter(question_tokens)
    u_tf = Counter(unit_tokens)
    dot = 0.0
    for term, qf in q_tf.items():
        uf = u_tf.get(term, 0)
        if uf:
            idf = stats.idf(term)
            dot += (qf * idf) * (uf * idf)
    q_norm = math.sqrt(sum((f * stats.idf(t)) ** 2 for t, f in q_tf.items()))
    u_norm = math.sqrt(sum((f * stats.idf(t)) ** 2 for t, f in u_tf.items()))
    if q_norm == 0.0 or u_norm == 0.0:
        return 0.0
    return dot / (q_norm * u_norm)


def _recall_ratio(question_tokens: Sequence[str], unit_tokens: Sequence[str]) -> float:
    content = {t for t in question_tokens if t not in STOPWORDS}
    if not content:
        return 0.0
    unit = set(unit_tokens)
    return len(content & unit) / len(content)


def relevance_features(
    question: TokenizedText,
    unit_tokens: Sequence[str],
    stats: CorpusStats,
    unit_kind: str = "document",
) -> FeatureVector:
    """Question/unit matching features; ``unit_kind`` picks the BM25 length prior."""
    avg_len = stats.avg_doc_len if unit_kind == "document" else stats.avg_para_len
    values = np.array(
        [
            _bm25(question.tokens, unit_tokens, stats, avg_len),
            _tfidf_cosine(question.tokens, unit_tokens, stats),
            _recall_ratio(question.tokens, unit_tokens),
            float(len(unit_tokens)),
            float(len(question)),
        ]
    )
    return FeatureVector(values, RELEVANCE_SCHEMA)


def structural_schema(qtype_vocab: Sequence[str] = DEFAULT_QTYPES) -> tuple[str, ...]:
    return ("is_first", "is_last", "para_len", "prev_para_len", "next_para_len") + tuple(
        f"qtype_{name}" for name in qtype_vocab
    )


def paragraph_structural_features(
    doc: Document,
    idx: int,
    qtype: Optional[str] = None,
    qtype_vocab: Sequence[str] = DEFAULT_QTYPES,
) -> FeatureVector:
    """Position and length features of paragraph ``idx`` plus a qtype one-hot."""
    if idx < 0 or idx >= len(doc.paragraphs):
        raise IndexError(f"paragraph index {idx} out of range for {len(doc.paragraphs)} paragraphs")
    n = len(doc.paragraphs)
    prev_len = len(doc.paragraphs[idx - 1]) if idx > 0 else 0
    next_len = len(doc.paragraphs[idx + 1]) if idx + 1 < n else 0
    one_hot = [0.0] * len(qtype_vocab)
    if qtype is not None:
        key = qtype.lower()
        for j, name in enumerate(qtype_vocab):
            if key == name:
                one_hot[j] = 1.0
    values = np.array(
        [
            1.0 if idx == 0 else 0.0,
            1.0 if idx == n - 1 else 0.0,
            float(len(doc.paragraphs[idx])),
            float(prev_len),
            float(next_len),
            *one_hot,
        ]
    )
    return FeatureVector(values, structural_schema(qtype_vocab))


def _is_numeric(token: str) -> bool:
    return bool(token) and all(ch.isdigit() or ch in ".,%" for ch in token) and any(ch.isdigit() for ch in token)


def prefilter_paragraphs(question: TokenizedText, doc: Document) -> list[int]:
    """Indices of paragraphs sharing a content word or number with the question.

    Falls back to paragraph 0 when everything would be pruned; an empty
    document yields an empty list.
    """
    if not doc.paragraphs:
        return []
    q_content = {t for t in question.tokens if t not in STOPWORDS}
    q_numbers = {t for t in question.tokens if _is_numeric(t)}
    retained = []
    for idx, para in enumerate(doc.paragraphs):
        p_tokens = set(para.tokens)
        if q_content & p_tokens or q_numbers & {t for t in p_tokens if _is_numeric(t)}:
            retained.append(idx)
    return retained or [0]
