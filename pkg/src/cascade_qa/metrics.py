"""Answer-quality metrics: exact match, token F1, corpus BLEU-4, ROUGE-L.

All metrics normalize text first: lowercase, strip punctuation, and for
Latin-script answers drop English articles and collapse whitespace.  CJK
answers instead drop whitespace and are compared character by character.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from typing import Sequence, Union

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_CJK_RE = re.compile(r"[㐀-䶿一-鿿豈-﫿]")

Golds = Sequence[str]


def _strip_punct(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize_answer(text: str) -> str:
    """Canonical form used by every metric."""
    text = _strip_punct(text.lower())
    if _CJK_RE.search(text):
        return "".join(text.split())
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def answer_tokens(text: str) -> list[str]:
    norm = normalize_answer(text)
    if _CJK_RE.search(norm):
        return list(norm)
    return norm.split()


def exact_match(prediction: str, golds: Golds) -> float:
    """1.0 iff the normalized prediction equals any normalized gold."""
    pred = normalize_answer(prediction)
    return 1.0 if any(pred == normalize_answer(g) for g in golds) else 0.0


def _f1_pair(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Golds) -> float:
    """Best multiset-overlap F1 of the prediction against any gold."""
    if not golds:
        return 0.0
    pred_tokens = answer_tokens(prediction)
    return max(_f1_pair(pred_tokens, answer_tokens(g)) for g in golds)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(predictions: Sequence[str], golds: Sequence[Union[str, Golds]]) -> float:
    """Corpus BLEU-4 with add-one smoothing on zero n-gram counts.

    ``golds[i]`` may be one reference string or a list of references for
    ``predictions[i]``.
    """
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions vs {len(golds)} gold entries")
    matched = [0] * 4
    total = [0] * 4
    cand_len = 0
    ref_len = 0
    for pred, gold in zip(predictions, golds):
        refs = [gold] if isinstance(gold, str) else list(gold)
        cand = answer_tokens(pred)
        ref_tokens = [answer_tokens(r) for r in refs]
        cand_len += len(cand)
        if ref_tokens:
            ref_len += min((abs(len(r) - len(cand)), len(r)) for r in ref_tokens)[1]
        for n in range(1, 5):
            cand_grams = _ngrams(cand, n)
            max_ref = Counter()
            for r in ref_tokens:
                for gram, count in _ngrams(r, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            matched[n - 1] += sum(min(count, max_ref[gram]) for gram, count in cand_grams.items())
            total[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0:
        return 0.0
    log_precision = 0.0
    for n in range(4):
        if total[n] == 0:
            precision = 1.0
        elif matched[n] == 0:
            precision = (matched[n] + 1.0) / (total[n] + 1.0)
        else:
            precision = matched[n] / total[n]
        log_precision += math.log(precision) / 4.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


def _lcs_len(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token in a:
        curr = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if token == other:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(prediction: str, golds: Golds, beta: float = 1.2) -> float:
    """Best LCS-based F-score against any gold, F = (1+b^2)RP / (R + b^2 P)."""
    if not golds:
        return 0.0
    pred_tokens = answer_tokens(prediction)
    best = 0.0
    for gold in golds:
        gold_tokens = answer_tokens(gold)
        if not pred_tokens and not gold_tokens:
            best = max(best, 1.0)
            continue
        lcs = _lcs_len(pred_tokens, gold_tokens)
        if lcs == 0:
            continue
        recall = lcs / len(gold_tokens)
        precision = lcs / len(pred_tokens)
        denom = recall + beta * beta * precision
        best = max(best, (1.0 + beta * beta) * recall * precision / denom)
    return best
