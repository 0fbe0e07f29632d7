"""Synthetic planted-answer corpora for sanity training runs and benchmarks.

Each generated question has exactly one answer-bearing document and
paragraph; the answer tokens appear nowhere else, so distant supervision,
cascade recall and end-to-end extraction can all be verified against the
plant locations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

_TEMPLATES = (
    (
        "where is the {e} plant located",
        "the {e} plant is located in {a} valley",
        "entity",
    ),
    (
        "what does the {e} factory produce",
        "the {e} factory does produce {a} units",
        "description",
    ),
)


def _make_words(rng: np.random.Generator, count: int, syllables: int = 3) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


@dataclass(frozen=True)
class Plant:
    qid: str
    doc_id: str
    para_index: int
    answer: str


def generate_corpus(
    n_questions: int = 20,
    n_docs: int = 5,
    paras_per_doc: int = 3,
    para_len: int = 12,
    answer_len: int = 1,
    seed: int = 0,
    decoy_answers: bool = False,
) -> tuple[list[dict], list[Plant]]:
    """Build dataset records plus the ground-truth plant locations.

    With ``decoy_answers`` every negative document carries the answer
    template filled with a wrong token, so extraction has to tell documents
    apart rather than just spot the template.
    """
    rng = np.random.default_rng(seed)
    filler_pool = _make_words(rng, 40)
    entities = _make_words(rng, n_questions, syllables=4)
    answer_words = _make_words(rng, n_questions * answer_len, syllables=5)
    decoy_pool = _make_words(rng, 30, syllables=6)

    def filler(k: int) -> str:
        return " ".join(rng.choice(filler_pool, size=k))

    records: list[dict] = []
    plants: list[Plant] = []
    for i in range(n_questions):
        entity = entities[i]
        answer = " ".join(answer_words[i * answer_len : (i + 1) * answer_len])
        question_tpl, answer_tpl, qtype = _TEMPLATES[i % len(_TEMPLATES)]
        question = question_tpl.format(e=entity)
        pos_doc = int(rng.integers(n_docs))
        ans_para = int(rng.integers(paras_per_doc))

        documents = []
        for d in range(n_docs):
            doc_id = f"q{i:04d}-d{d}"
            if d == pos_doc:
                title = f"{entity} report"
                paragraphs = []
                for p in range(paras_per_doc):
                    if p == ans_para:
                        paragraphs.append(answer_tpl.format(e=entity, a=answer) + " " + filler(max(para_len - 8, 2)))
                    else:
                        # hard negative: mentions the entity but not the answer
                        paragraphs.append(f"the {entity} plant has " + filler(max(para_len - 4, 2)))
            else:
                other = entities[(i + d + 1) % n_questions]
                title = f"{other} report"
                paragraphs = [f"the {other} plant has " + filler(max(para_len - 4, 2)) for _ in range(paras_per_doc)]
                if decoy_answers:
                    decoy = decoy_pool[int(rng.integers(len(decoy_pool)))]
                    paragraphs[int(rng.integers(paras_per_doc))] = (
                        answer_tpl.format(e=other, a=decoy) + " " + filler(max(para_len - 8, 2))
                    )
            documents.append({"doc_id": doc_id, "title": title, "paragraphs": paragraphs})

        records.append(
            {
                "qid": f"q{i:04d}",
                "question": question,
                "question_type": qtype,
                "documents": documents,
                "answers": [answer],
            }
        )
        plants.append(Plant(qid=f"q{i:04d}", doc_id=f"q{i:04d}-d{pos_doc}", para_index=ans_para, answer=answer))
    return records, plants


def write_jsonl(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
