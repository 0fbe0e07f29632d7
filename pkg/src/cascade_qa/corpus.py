"""Dataset ingestion, tokenization, paragraph restructuring and weak labeling.

Datasets are UTF-8 JSON-lines files, one record per line:

    {"qid": str, "question": str, "question_type": str?,
     "documents": [{"doc_id": str, "title": str, "paragraphs": [str]}],
     "answers": [str]?}

Records without ``answers`` are prediction-mode examples.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import re

# CJK ideograph ranges tokenized one character per token.
_CJK_RANGES = "㐀-䶿一-鿿豈-﫿"
_WORD_CHARS = r"0-9A-Za-zÀ-ɏͰ-ϿЀ-ӿ"
_TOKEN_RE = re.compile(rf"([{_CJK_RANGES}])|([{_WORD_CHARS}]+)|(\S)")


class DatasetParseError(ValueError):
    """A dataset line is not valid JSON."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DatasetSchemaError(ValueError):
    """A record is missing a mandatory field or has the wrong shape."""

    def __init__(self, field_name: str, detail: str = ""):
        msg = f"missing or invalid field '{field_name}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.field_name = field_name


@dataclass(frozen=True)
class TokenizedText:
    """Lowercased tokens with character offsets back into the raw text."""

    raw: str
    tokens: tuple[str, ...]
    char_seqs: tuple[tuple[str, ...], ...]
    offsets: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def token_source(self, i: int) -> str:
        """Original (case-preserving) text of token ``i``."""
        start, end = self.offsets[i]
        return self.raw[start:end]

    def span_text(self, start: int, end: int) -> str:
        """Raw text covered by tokens ``start..end`` inclusive."""
        return self.raw[self.offsets[start][0] : self.offsets[end][1]]


@dataclass
class Document:
    doc_id: str
    title: TokenizedText
    paragraphs: list[TokenizedText]
    source_rank: int


@dataclass
class QaExample:
    qid: str
    question: TokenizedText
    question_type: Optional[str]
    documents: list[Document]
    gold_answers: list[str] = field(default_factory=list)


@dataclass
class SupervisionLabels:
    """Distant-supervision labels for one example.

    ``gold_span`` is ``(doc_index, paragraph_index, start, end)`` with both
    token endpoints inclusive, or ``None`` when no answer string matches.
    """

    doc_labels: list[int]
    para_labels: list[list[int]]
    gold_span: Optional[tuple[int, int, int, int]]

    @property
    def has_span(self) -> bool:
        return self.gold_span is not None


def tokenize(text: str) -> TokenizedText:
    """Split ``text`` into lowercased tokens.

    Alphanumeric runs form one token, punctuation is kept as its own token
    and CJK ideographs are segmented one character at a time.  Offsets index
    the original string, so slicing ``raw`` recovers the source of any token.
    """
    tokens: list[str] = []
    offsets: list[tuple[int, int]] = []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group(0).lower())
        offsets.append((m.start(), m.end()))
    char_seqs = tuple(tuple(tok) for tok in tokens)
    return TokenizedText(raw=text, tokens=tuple(tokens), char_seqs=char_seqs, offsets=tuple(offsets))


def merge_tokenized(parts: Sequence[TokenizedText], sep: str = " ") -> TokenizedText:
    """Concatenate tokenized paragraphs, shifting offsets into the joined raw."""
    if len(parts) == 1:
        return parts[0]
    raw_parts: list[str] = []
    tokens: list[str] = []
    char_seqs: list[tuple[str, ...]] = []
    offsets: list[tuple[int, int]] = []
    shift = 0
    for idx, part in enumerate(parts):
        if idx:
            raw_parts.append(sep)
            shift += len(sep)
        raw_parts.append(part.raw)
        tokens.extend(part.tokens)
        char_seqs.extend(part.char_seqs)
        offsets.extend((s + shift, e + shift) for s, e in part.offsets)
        shift += len(part.raw)
    return TokenizedText(
        raw="".join(raw_parts),
        tokens=tuple(tokens),
        char_seqs=tuple(char_seqs),
        offsets=tuple(offsets),
    )


def restructure_paragraphs(doc: Document, max_words: int = 600) -> Document:
    """Greedily merge consecutive paragraphs up to ``max_words`` tokens.

    Paragraphs that are already longer than the cap are kept whole; order and
    total token count are preserved.
    """
    if max_words <= 0:
        raise ValueError("max_words must be positive")
    if not doc.paragraphs:
        return doc
    merged: list[TokenizedText] = []
    group: list[TokenizedText] = [doc.paragraphs[0]]
    group_len = len(doc.paragraphs[0])
    for para in doc.paragraphs[1:]:
        if group_len + len(para) <= max_words:
            group.append(para)
            group_len += len(para)
        else:
            merged.append(merge_tokenized(group))
            group = [para]
            group_len = len(para)
    merged.append(merge_tokenized(group))
    return Document(doc_id=doc.doc_id, title=doc.title, paragraphs=merged, source_rank=doc.source_rank)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_token(token: str) -> str:
    """Lowercase and strip leading/trailing punctuation from a token."""
    t = token.lower()
    start, end = 0, len(t)
    while start < end and _is_punct(t[start]):
        start += 1
    while end > start and _is_punct(t[end - 1]):
        end -= 1
    return t[start:end]


def _norm_seq(tokens: Sequence[str]) -> tuple[list[str], list[int]]:
    """Normalized tokens plus a map back to the original token indices."""
    normed: list[str] = []
    index_map: list[int] = []
    for i, tok in enumerate(tokens):
        n = normalize_token(tok)
        if n:
            normed.append(n)
            index_map.append(i)
    return normed, index_map


def _find_subsequence(haystack: list[str], needle: list[str]) -> Iterator[int]:
    if not needle or len(needle) > len(haystack):
        return
    first = needle[0]
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i] == first and haystack[i : i + len(needle)] == needle:
            yield i


def distant_label(example: QaExample, doc_order: Optional[Sequence[int]] = None) -> SupervisionLabels:
    """Derive document/paragraph labels and a gold span by answer matching.

    A paragraph is positive iff any gold answer occurs in it as a contiguous
    normalized token subsequence; a document is positive iff any of its
    paragraphs is.  The gold span is the earliest match inside the
    highest-ranked positive document per ``doc_order`` (source order when
    omitted).  Examples with no match anywhere get all-negative labels and no
    span.
    """
    n_docs = len(example.documents)
    order = list(doc_order) if doc_order is not None else sorted(range(n_docs), key=lambda i: example.documents[i].source_rank)
    answer_seqs = []
    for ans in example.gold_answers:
        seq, _ = _norm_seq(tokenize(ans).tokens)
        if seq:
            answer_seqs.append(seq)

    para_labels: list[list[int]] = [[0] * len(d.paragraphs) for d in example.documents]
    matches: dict[int, list[tuple[int, int, int]]] = {}
    if answer_seqs:
        for di, doc in enumerate(example.documents):
            doc_matches: list[tuple[int, int, int]] = []
            for pi, para in enumerate(doc.paragraphs):
                normed, index_map = _norm_seq(para.tokens)
                for seq in answer_seqs:
                    for start in _find_subsequence(normed, seq):
                        para_labels[di][pi] = 1
                        doc_matches.append((pi, index_map[start], index_map[start + len(seq) - 1]))
            if doc_matches:
                matches[di] = doc_matches

    doc_labels = [max(p, default=0) for p in para_labels]
    gold_span = None
    for di in order:
        if di in matches:
            pi, start, end = min(matches[di])
            gold_span = (di, pi, start, end)
            break
    return SupervisionLabels(doc_labels=doc_labels, para_labels=para_labels, gold_span=gold_span)


def _require(record: dict, field_name: str, kind) -> object:
    if field_name not in record:
        raise DatasetSchemaError(field_name)
    value = record[field_name]
    if not isinstance(value, kind):
        raise DatasetSchemaError(field_name, f"expected {kind.__name__}")
    return value


def parse_record(record: dict) -> QaExample:
    """Build a ``QaExample`` from a raw JSON record, validating the schema."""
    qid = _require(record, "qid", str)
    question = _require(record, "question", str)
    raw_docs = _require(record, "documents", list)
    qtype = record.get("question_type")
    if qtype is not None and not isinstance(qtype, str):
        raise DatasetSchemaError("question_type", "expected str")
    answers = record.get("answers", [])
    if not isinstance(answers, list) or any(not isinstance(a, str) for a in answers):
        raise DatasetSchemaError("answers", "expected list of str")

    documents = []
    for rank, raw_doc in enumerate(raw_docs):
        if not isinstance(raw_doc, dict):
            raise DatasetSchemaError("documents", "expected list of objects")
        doc_id = _require(raw_doc, "doc_id", str)
        title = _require(raw_doc, "title", str)
        paragraphs = _require(raw_doc, "paragraphs", list)
        if any(not isinstance(p, str) for p in paragraphs):
            raise DatasetSchemaError("paragraphs", "expected list of str")
        documents.append(
            Document(
                doc_id=doc_id,
                title=tokenize(title),
                paragraphs=[tokenize(p) for p in paragraphs],
                source_rank=rank,
            )
        )
    seen = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise DatasetSchemaError("doc_id", f"duplicate '{doc.doc_id}'")
        seen.add(doc.doc_id)
    return QaExample(
        qid=qid,
        question=tokenize(question),
        question_type=qtype,
        documents=documents,
        gold_answers=list(answers),
    )


def load_dataset(path: str | Path) -> Iterator[QaExample]:
    """Stream ``QaExample`` records from a JSON-lines file in file order."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(line_no, exc.msg) from exc
            if not isinstance(record, dict):
                raise DatasetParseError(line_no, "record is not a JSON object")
            yield parse_record(record)
