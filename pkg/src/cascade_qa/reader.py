"""Multi-task attention reader over the cascade-selected text.

A shared encoder (word + char-CNN embeddings into BiLSTMs, question-aware
co-attention with a gated fusion kernel, then self-attention) feeds three
heads: a document scorer, a paragraph scorer and a start/end span pointer
over the concatenation of all selected documents.  The final answer score
multiplies all three heads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .corpus import Document, TokenizedText

SENTENCE_SEPARATORS = frozenset({".", "!", "?", "。", "！", "？", ";", "；"})

MANUAL_FEATURE_DIM = 4

TASK_PREFIXES = ("doc_head.", "para_head.", "ctx.", "span.")


def is_shared_param(name: str) -> bool:
    """Shared bottom-layer parameters, the targets of successive regularization."""
    return not name.startswith(TASK_PREFIXES)


@dataclass
class ReaderConfig:
    hidden_size: int = 128
    word_emb_size: int = 64
    char_emb_size: int = 16
    char_filters: int = 32
    char_width: int = 5
    lambda1: float = 0.5
    lambda2: float = 0.5
    delta: float = 0.01
    learning_rate: float = 0.0005
    batch_size: int = 32
    max_span_len: int = 25

    def __post_init__(self):
        for name in ("hidden_size", "word_emb_size", "char_emb_size", "char_filters", "char_width", "learning_rate", "batch_size", "max_span_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda1", "lambda2", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def structural_fields(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "word_emb_size": self.word_emb_size,
            "char_emb_size": self.char_emb_size,
            "char_filters": self.char_filters,
            "char_width": self.char_width,
        }


UNK = "<unk>"


@dataclass
class Vocabulary:
    word_to_id: dict[str, int]
    char_to_id: dict[str, int]

    @classmethod
    def build(cls, token_streams: Iterable[Sequence[str]]) -> "Vocabulary":
        words = {UNK: 0}
        chars = {UNK: 0}
        for tokens in token_streams:
            for tok in tokens:
                if tok not in words:
                    words[tok] = len(words)
                for ch in tok:
                    if ch not in chars:
                        chars[ch] = len(chars)
        return cls(word_to_id=words, char_to_id=chars)

    @property
    def n_words(self) -> int:
        return len(self.word_to_id)

    @property
    def n_chars(self) -> int:
        return len(self.char_to_id)

    def word_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.word_to_id.get(t, 0) for t in tokens], dtype=np.int64)

    def char_ids(self, token: str) -> np.ndarray:
        return np.array([self.char_to_id.get(c, 0) for c in token], dtype=np.int64)


def init_reader_params(config: ReaderConfig, n_words: int, n_chars: int, seed: int = 0) -> ParameterStore:
    """Fresh trainable parameters; creation order is fixed for reproducibility."""
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    h = config.hidden_size
    two_h = 2 * h
    emb_in = config.word_emb_size + config.char_filters

    store.add("emb.word", ad.uniform_init(rng, (n_words, config.word_emb_size), config.word_emb_size))
    store.add("emb.char", ad.uniform_init(rng, (n_chars, config.char_emb_size), config.char_emb_size))
    conv_in = config.char_width * config.char_emb_size
    store.add("char.filters", ad.uniform_init(rng, (conv_in, config.char_filters), conv_in))
    store.add("char.bias", np.zeros(config.char_filters))

    for prefix in ("enc_q", "enc_d"):
        for direction in ("fwd", "bwd"):
            store.add(f"{prefix}.{direction}.W", ad.uniform_init(rng, (emb_in + h, 4 * h), emb_in + h))
            store.add(f"{prefix}.{direction}.b", ad.lstm_bias_init(h))

    store.add("coatt.W_l", ad.uniform_init(rng, (two_h, two_h), two_h))
    for prefix in ("fuse_co", "fuse_self"):
        store.add(f"{prefix}.W_m", ad.uniform_init(rng, (4 * two_h, two_h), 4 * two_h))
        store.add(f"{prefix}.b_m", np.zeros(two_h))
        store.add(f"{prefix}.W_g", ad.uniform_init(rng, (4 * two_h, two_h), 4 * two_h))
        store.add(f"{prefix}.b_g", np.zeros(two_h))
    store.add("selfatt.W_s", ad.uniform_init(rng, (two_h, two_h), two_h))
    store.add("align.w_q", ad.uniform_init(rng, (two_h,), two_h))
    store.add("align.w_d", ad.uniform_init(rng, (two_h,), two_h))

    store.add("doc_head.W_qd", ad.uniform_init(rng, (two_h, two_h), two_h))
    store.add("para_head.W_qp", ad.uniform_init(rng, (two_h, two_h), two_h))

    ctx_in = two_h + two_h + MANUAL_FEATURE_DIM
    for direction in ("fwd", "bwd"):
        store.add(f"ctx.{direction}.W", ad.uniform_init(rng, (ctx_in + h, 4 * h), ctx_in + h))
        store.add(f"ctx.{direction}.b", ad.lstm_bias_init(h))
    store.add("span.w_start", ad.uniform_init(rng, (two_h,), two_h))
    store.add("span.w_end", ad.uniform_init(rng, (two_h,), two_h))
    return store


# ---------------------------------------------------------------------------
# Prepared reader inputs
# ---------------------------------------------------------------------------


@dataclass
class ReaderDoc:
    """One selected document, restricted to its selected paragraphs."""

    doc_id: str
    tokens: list[str]
    raw_tokens: list[str]
    word_ids: np.ndarray
    char_ids: list[np.ndarray]
    # (token start, token end exclusive, original paragraph index) per selected paragraph
    para_bounds: list[tuple[int, int, int]]
    para_sources: list[TokenizedText]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Segment:
    doc_pos: int
    para_slot: int
    start: int
    end: int  # exclusive
    doc_id: str
    para_index: int


@dataclass
class ReaderExample:
    qid: str
    question_tokens: list[str]
    question_raw_tokens: list[str]
    q_word_ids: np.ndarray
    q_char_ids: list[np.ndarray]
    docs: list[ReaderDoc]
    gold_answers: list[str] = field(default_factory=list)
    doc_labels: Optional[list[int]] = None
    para_labels: Optional[list[list[int]]] = None
    gold_span: Optional[tuple[int, int]] = None  # global token coordinates, end inclusive

    @property
    def segments(self) -> list[Segment]:
        out = []
        offset = 0
        for doc_pos, doc in enumerate(self.docs):
            for slot, (start, end, orig_idx) in enumerate(doc.para_bounds):
                out.append(Segment(doc_pos, slot, offset + start, offset + end, doc.doc_id, orig_idx))
            offset += len(doc)
        return out

    @property
    def total_tokens(self) -> int:
        return sum(len(d) for d in self.docs)

    def global_span(self, doc_id: str, para_index: int, start: int, end: int) -> Optional[tuple[int, int]]:
        """Map a (document, paragraph, local token) span into the concatenation."""
        offset = 0
        for doc in self.docs:
            if doc.doc_id == doc_id:
                for b_start, b_end, orig_idx in doc.para_bounds:
                    if orig_idx == para_index and b_start + end < b_end:
                        return offset + b_start + start, offset + b_start + end
                return None
            offset += len(doc)
        return None

    def locate(self, position: int) -> tuple[ReaderDoc, int]:
        """Document containing a global token position plus the local index."""
        offset = 0
        for doc in self.docs:
            if position < offset + len(doc):
                return doc, position - offset
            offset += len(doc)
        raise IndexError(f"position {position} out of range")

    def answer_text(self, start: int, end: int) -> str:
        """Raw text for a global token span (endpoints inclusive, same paragraph)."""
        doc, local_start = self.locate(start)
        _, local_end = self.locate(end)
        for (b_start, b_end, _), source in zip(doc.para_bounds, doc.para_sources):
            if b_start <= local_start < b_end:
                return source.span_text(local_start - b_start, local_end - b_start)
        raise IndexError("span start not inside any paragraph segment")


def build_reader_example(
    qid: str,
    question: TokenizedText,
    selected: Sequence[tuple[Document, Sequence[int]]],
    vocab: Vocabulary,
    gold_answers: Sequence[str] = (),
) -> ReaderExample:
    """Assemble reader inputs from cascade-selected documents and paragraphs.

    ``selected`` pairs each document (in ranking order) with the indices of
    its selected paragraphs; paragraphs are laid out in ascending index order
    so the concatenation reads like the original document.
    """
    if len(question) == 0:
        raise ValueError("empty question")
    if not selected:
        raise ValueError("no documents selected")
    docs = []
    for doc, para_indices in selected:
        tokens: list[str] = []
        raw_tokens: list[str] = []
        bounds: list[tuple[int, int, int]] = []
        sources: list[TokenizedText] = []
        for idx in sorted(para_indices):
            para = doc.paragraphs[idx]
            start = len(tokens)
            tokens.extend(para.tokens)
            raw_tokens.extend(para.token_source(i) for i in range(len(para)))
            bounds.append((start, len(tokens), idx))
            sources.append(para)
        if not tokens:
            continue
        docs.append(
            ReaderDoc(
                doc_id=doc.doc_id,
                tokens=tokens,
                raw_tokens=raw_tokens,
                word_ids=vocab.word_ids(tokens),
                char_ids=[vocab.char_ids(t) for t in tokens],
                para_bounds=bounds,
                para_sources=sources,
            )
        )
    if not docs:
        raise ValueError("no non-empty documents selected")
    return ReaderExample(
        qid=qid,
        question_tokens=list(question.tokens),
        question_raw_tokens=[question.token_source(i) for i in range(len(question))],
        q_word_ids=vocab.word_ids(question.tokens),
        q_char_ids=[vocab.char_ids(t) for t in question.tokens],
        docs=docs,
        gold_answers=list(gold_answers),
    )


def manual_features(ex: ReaderExample) -> np.ndarray:
    """Per-token hand features over the document concatenation.

    Columns: exact question-word match, lowercased match, sentence-ending
    separator, and the token's normalized frequency within its document.
    """
    q_exact = set(ex.question_raw_tokens)
    q_lower = set(ex.question_tokens)
    rows = []
    for doc in ex.docs:
        counts: dict[str, int] = {}
        for tok in doc.tokens:
            counts[tok] = counts.get(tok, 0) + 1
        total = float(len(doc.tokens))
        for tok, raw in zip(doc.tokens, doc.raw_tokens):
            rows.append(
                (
                    1.0 if raw in q_exact else 0.0,
                    1.0 if tok in q_lower else 0.0,
                    1.0 if tok in SENTENCE_SEPARATORS else 0.0,
                    counts[tok] / total,
                )
            )
    return np.array(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# Model blocks
# ---------------------------------------------------------------------------


def _collect(collect: Optional[list], name: str, dist: np.ndarray) -> None:
    if collect is not None:
        collect.append((name, dist))


def _encode_tokens(word_ids, char_ids, store: ParameterStore, config: ReaderConfig, prefix: str) -> Tensor:
    word_vecs = ad.gather(store["emb.word"], word_ids)
    char_vecs = ad.stack_rows(
        [ad.char_cnn_embed(cs, store["emb.char"], store["char.filters"], store["char.bias"], config.char_width) for cs in char_ids]
    )
    x = ad.concat([word_vecs, char_vecs], axis=1)
    return ad.lstm_sequence(x, store[f"{prefix}.fwd.W"], store[f"{prefix}.fwd.b"], store[f"{prefix}.bwd.W"], store[f"{prefix}.bwd.b"])


def encode(ex: ReaderExample, store: ParameterStore, config: ReaderConfig) -> tuple[Tensor, list[Tensor]]:
    """Question states u^Q and raw per-document states u^D (each (T, 2h))."""
    if len(ex.question_tokens) == 0:
        raise ValueError("empty question")
    if not ex.docs:
        raise ValueError("empty document set")
    uq = _encode_tokens(ex.q_word_ids, ex.q_char_ids, store, config, "enc_q")
    uds = [_encode_tokens(doc.word_ids, doc.char_ids, store, config, "enc_d") for doc in ex.docs]
    return uq, uds


def fuse(x: Tensor, y: Tensor, store: ParameterStore, prefix: str) -> Tensor:
    """Gated combination of a representation with its attended counterpart."""
    cat = ad.concat([x, y, x * y, x - y], axis=1)
    m = ad.tanh(ad.matmul(cat, store[f"{prefix}.W_m"]) + store[f"{prefix}.b_m"])
    g = ad.sigmoid(ad.matmul(cat, store[f"{prefix}.W_g"]) + store[f"{prefix}.b_g"])
    return g * m + (1.0 - g) * x


def coattend_fuse(uq: Tensor, ud: Tensor, store: ParameterStore, collect: Optional[list] = None) -> Tensor:
    """Question-aware document states via co-attention plus fusion."""
    if uq.shape[1] != ud.shape[1]:
        raise ad.ShapeError(f"coattend_fuse: width mismatch {uq.shape} vs {ud.shape}")
    pq = ad.relu(ad.matmul(uq, store["coatt.W_l"]))
    pd = ad.relu(ad.matmul(ud, store["coatt.W_l"]))
    alpha = ad.softmax(ad.matmul(pd, ad.transpose(pq)))  # (doc, question)
    _collect(collect, "alpha", alpha.data)
    attended = ad.matmul(alpha, uq)
    return fuse(ud, attended, store, "fuse_co")


def self_attend_fuse(vd: Tensor, store: ParameterStore, collect: Optional[list] = None) -> Tensor:
    """Align the document against itself and fuse, for long-range context."""
    beta = ad.softmax(ad.matmul(ad.matmul(vd, store["selfatt.W_s"]), ad.transpose(vd)))
    _collect(collect, "beta", beta.data)
    attended = ad.matmul(beta, vd)
    return fuse(vd, attended, store, "fuse_self")


def _self_align(states: Tensor, weight: Tensor, collect: Optional[list], name: str) -> Tensor:
    dist = ad.softmax(ad.matmul(states, weight))
    _collect(collect, name, dist.data)
    return ad.matmul(dist, states)


def question_vector(uq: Tensor, store: ParameterStore, collect: Optional[list] = None) -> Tensor:
    """Self-aligned question summary r^Q."""
    return _self_align(uq, store["align.w_q"], collect, "gamma")


def _bce_from_logit(logit: Tensor, label: float) -> Tensor:
    # -[y log s + (1-y) log (1-s)] for s = sigmoid(logit), computed stably
    return ad.softplus(logit) - float(label) * logit


def document_head(
    dds: Sequence[Tensor],
    rq: Tensor,
    labels: Optional[Sequence[int]],
    store: ParameterStore,
    collect: Optional[list] = None,
) -> tuple[list[Tensor], Optional[Tensor]]:
    """Per-document probabilities and the mean binary cross-entropy loss."""
    if not dds:
        raise ValueError("document head needs at least one document")
    rq_proj = ad.matmul(rq, store["doc_head.W_qd"])
    probs = []
    loss = None
    for pos, dd in enumerate(dds):
        rd = _self_align(dd, store["align.w_d"], collect, "mu")
        logit = ad.matmul(rq_proj, rd)
        probs.append(ad.sigmoid(logit))
        if labels is not None:
            term = _bce_from_logit(logit, labels[pos])
            loss = term if loss is None else loss + term
    if loss is not None:
        loss = (1.0 / len(dds)) * loss
    return probs, loss


def paragraph_head(
    ex: ReaderExample,
    dds: Sequence[Tensor],
    rq: Tensor,
    labels: Optional[Sequence[Sequence[int]]],
    store: ParameterStore,
    collect: Optional[list] = None,
) -> tuple[list[list[Tensor]], Optional[Tensor]]:
    """Per-paragraph probabilities; absent slots shrink the loss divisor."""
    rq_proj = ad.matmul(rq, store["para_head.W_qp"])
    probs: list[list[Tensor]] = []
    loss = None
    count = 0
    for doc_pos, (doc, dd) in enumerate(zip(ex.docs, dds)):
        doc_probs = []
        for slot, (start, end, _) in enumerate(doc.para_bounds):
            segment = ad.slice_axis(dd, start, end)
            rp = _self_align(segment, store["align.w_d"], collect, "mu_para")
            logit = ad.matmul(rq_proj, rp)
            doc_probs.append(ad.sigmoid(logit))
            if labels is not None:
                term = _bce_from_logit(logit, labels[doc_pos][slot])
                loss = term if loss is None else loss + term
                count += 1
        probs.append(doc_probs)
    if loss is not None and count:
        loss = (1.0 / count) * loss
    return probs, loss


def shared_context(
    ex: ReaderExample,
    dds: Sequence[Tensor],
    rq: Tensor,
    store: ParameterStore,
) -> Tensor:
    """One BiLSTM over all selected documents concatenated in ranking order."""
    total = ex.total_tokens
    d_all = ad.concat(list(dds), axis=0)
    rq_rows = ad.broadcast_to(ad.reshape(rq, (1, rq.shape[0])), (total, rq.shape[0]))
    feats = Tensor(manual_features(ex))
    x = ad.concat([d_all, rq_rows, feats], axis=1)
    return ad.lstm_sequence(x, store["ctx.fwd.W"], store["ctx.fwd.b"], store["ctx.bwd.W"], store["ctx.bwd.b"])


def span_head(
    g: Tensor,
    gold_span: Optional[tuple[int, int]],
    store: ParameterStore,
    collect: Optional[list] = None,
) -> tuple[Tensor, Tensor, Optional[Tensor]]:
    """Start/end distributions over every token of the concatenation."""
    total = g.shape[0]
    log_start = ad.log_softmax(ad.matmul(g, store["span.w_start"]))
    log_end = ad.log_softmax(ad.matmul(g, store["span.w_end"]))
    start_dist = ad.exp(log_start)
    end_dist = ad.exp(log_end)
    _collect(collect, "alpha1", start_dist.data)
    _collect(collect, "alpha2", end_dist.data)
    loss = None
    if gold_span is not None:
        y1, y2 = gold_span
        if not (0 <= y1 <= y2 < total):
            raise ValueError(f"gold span {gold_span} outside [0, {total})")
        loss = -(ad.take(log_start, y1) + ad.take(log_end, y2))
    return start_dist, end_dist, loss


def joint_loss(
    l_ae: Tensor,
    l_de: Tensor,
    l_pe: Tensor,
    config: ReaderConfig,
    store: ParameterStore,
    snapshot: Optional[dict[str, np.ndarray]] = None,
) -> Tensor:
    """L_AE + lambda1 L_DE + lambda2 L_PE, plus successive regularization.

    When ``snapshot`` holds the shared parameters frozen at the stage
    transition, ``delta * ||theta_s - theta_s'||^2`` ties the shared layers to
    their earlier values.  Zero-weight terms are dropped from the graph so a
    weight of 0 exactly reproduces span-only training.
    """
    loss = l_ae
    if config.lambda1 != 0.0:
        loss = loss + config.lambda1 * l_de
    if config.lambda2 != 0.0:
        loss = loss + config.lambda2 * l_pe
    if snapshot is not None and config.delta > 0.0:
        reg = None
        for name in sorted(snapshot):
            diff = store[name] - Tensor(snapshot[name])
            term = ad.reduce_sum(ad.square(diff))
            reg = term if reg is None else reg + term
        if reg is not None:
            loss = loss + config.delta * reg
    return loss


# ---------------------------------------------------------------------------
# Full forward pass
# ---------------------------------------------------------------------------


@dataclass
class ReaderOutputs:
    """Numpy view of one forward pass, ready for span scoring."""

    doc_scores: np.ndarray
    para_scores: list[np.ndarray]
    start_dist: np.ndarray
    end_dist: np.ndarray
    segments: list[Segment]


@dataclass
class ReaderForward:
    doc_probs: list[Tensor]
    para_probs: list[list[Tensor]]
    start_dist: Tensor
    end_dist: Tensor
    segments: list[Segment]
    loss_de: Optional[Tensor] = None
    loss_pe: Optional[Tensor] = None
    loss_ae: Optional[Tensor] = None

    def outputs(self) -> ReaderOutputs:
        return ReaderOutputs(
            doc_scores=np.array([p.item() for p in self.doc_probs]),
            para_scores=[np.array([p.item() for p in doc]) for doc in self.para_probs],
            start_dist=self.start_dist.data.copy(),
            end_dist=self.end_dist.data.copy(),
            segments=self.segments,
        )


def forward_example(
    store: ParameterStore,
    config: ReaderConfig,
    ex: ReaderExample,
    with_losses: bool = True,
    collect: Optional[list] = None,
) -> ReaderForward:
    """Run the full reader on one prepared example."""
    uq, uds = encode(ex, store, config)
    rq = question_vector(uq, store, collect)
    dds = [self_attend_fuse(coattend_fuse(uq, ud, store, collect), store, collect) for ud in uds]

    doc_labels = ex.doc_labels if with_losses else None
    para_labels = ex.para_labels if with_losses else None
    doc_probs, loss_de = document_head(dds, rq, doc_labels, store, collect)
    para_probs, loss_pe = paragraph_head(ex, dds, rq, para_labels, store, collect)

    g = shared_context(ex, dds, rq, store)
    gold = ex.gold_span if with_losses else None
    start_dist, end_dist, loss_ae = span_head(g, gold, store, collect)

    return ReaderForward(
        doc_probs=doc_probs,
        para_probs=para_probs,
        start_dist=start_dist,
        end_dist=end_dist,
        segments=ex.segments,
        loss_de=loss_de,
        loss_pe=loss_pe,
        loss_ae=loss_ae,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int  # inclusive
    score: float
    doc_pos: int
    para_slot: int
    doc_id: str
    para_index: int


def predict_answer(outputs: ReaderOutputs, max_span_len: int = 25) -> SpanPrediction:
    """Highest product of span, document and paragraph scores.

    Candidate spans stay inside one paragraph segment and within
    ``max_span_len`` tokens; ties prefer the earlier start, then the shorter
    span.
    """
    if max_span_len < 1:
        raise ValueError("max_span_len must be >= 1")
    if not outputs.segments:
        raise ValueError("no valid span candidates: empty segment list")
    best: Optional[tuple[float, Segment, int, int]] = None
    for seg in outputs.segments:
        a1 = outputs.start_dist[seg.start : seg.end]
        a2 = outputs.end_dist[seg.start : seg.end]
        weight = float(outputs.doc_scores[seg.doc_pos] * outputs.para_scores[seg.doc_pos][seg.para_slot])
        length = seg.end - seg.start
        grid = np.outer(a1, a2) * weight
        valid = np.triu(np.ones((length, length), dtype=bool)) & ~np.triu(
            np.ones((length, length), dtype=bool), k=max_span_len
        )
        grid = np.where(valid, grid, -1.0)
        flat = int(np.argmax(grid))  # first occurrence: earliest start, then shortest
        s_loc, e_loc = divmod(flat, length)
        score = float(grid[s_loc, e_loc])
        if best is None or score > best[0]:
            best = (score, seg, seg.start + s_loc, seg.start + e_loc)
    score, seg, start, end = best
    return SpanPrediction(
        start=start,
        end=end,
        score=score,
        doc_pos=seg.doc_pos,
        para_slot=seg.para_slot,
        doc_id=seg.doc_id,
        para_index=seg.para_index,
    )


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def _fingerprint(config: ReaderConfig, shapes: dict[str, list[int]]) -> str:
    payload = json.dumps({"config": config.structural_fields(), "shapes": shapes}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_reader_checkpoint(
    path: str | Path,
    store: ParameterStore,
    config: ReaderConfig,
    vocab: Vocabulary,
    stage: str,
) -> None:
    """Write parameters plus config, vocabulary and a structural fingerprint."""
    shapes = {name: list(t.data.shape) for name, t in store.items()}
    meta = {
        "version": 1,
        "stage": stage,
        "config": asdict(config),
        "word_vocab": list(vocab.word_to_id),
        "char_vocab": list(vocab.char_to_id),
        "fingerprint": _fingerprint(config, shapes),
        "shapes": shapes,
    }
    arrays = {f"param/{name}": t.data for name, t in store.items()}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_reader_checkpoint(path: str | Path) -> tuple[ParameterStore, ReaderConfig, Vocabulary, str]:
    """Load a checkpoint, rejecting fingerprint or shape mismatches."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"][()]))
        if meta.get("version") != 1:
            raise ValueError(f"unsupported reader checkpoint version {meta.get('version')!r}")
        config = ReaderConfig(**meta["config"])
        shapes = {name: tuple(shape) for name, shape in meta["shapes"].items()}
        if meta["fingerprint"] != _fingerprint(config, meta["shapes"]):
            raise ValueError("reader checkpoint fingerprint mismatch")
        store = ParameterStore()
        for name, shape in shapes.items():
            array = data[f"param/{name}"]
            if array.shape != shape:
                raise ValueError(f"parameter '{name}': stored shape {array.shape} != declared {shape}")
            store.add(name, array)
    words = {w: i for i, w in enumerate(meta["word_vocab"])}
    chars = {c: i for i, c in enumerate(meta["char_vocab"])}
    return store, config, Vocabulary(words, chars), meta["stage"]
