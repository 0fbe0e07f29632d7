"""Tests for tokenization, dataset loading and distant supervision."""

import json

import numpy as np
import pytest

from cascade_qa.corpus import (
    DatasetParseError,
    DatasetSchemaError,
    Document,
    QaExample,
    distant_label,
    load_dataset,
    normalize_token,
    parse_record,
    restructure_paragraphs,
    tokenize,
)


def make_doc(doc_id, paragraphs, rank=0, title=""):
    return Document(doc_id=doc_id, title=tokenize(title), paragraphs=[tokenize(p) for p in paragraphs], source_rank=rank)


def make_example(paragraph_sets, answers, question="where is paris"):
    docs = [make_doc(f"d{i}", paras, rank=i) for i, paras in enumerate(paragraph_sets)]
    return QaExample(qid="q0", question=tokenize(question), question_type=None, documents=docs, gold_answers=answers)


class TestTokenize:
    def test_punctuation_split(self):
        assert list(tokenize("What is BM25?").tokens) == ["what", "is", "bm25", "?"]

    def test_empty(self):
        assert list(tokenize("").tokens) == []

    def test_lowercase_distinct_offsets(self):
        tt = tokenize("A a")
        assert list(tt.tokens) == ["a", "a"]
        assert tt.offsets[0] != tt.offsets[1]

    def test_cjk_per_character(self):
        assert list(tokenize("今天天气 good").tokens) == ["今", "天", "天", "气", "good"]

    def test_offsets_recover_source(self):
        text = "The Eiffel Tower, built 1889."
        tt = tokenize(text)
        for i in range(len(tt)):
            start, end = tt.offsets[i]
            assert text[start:end].lower() == tt.tokens[i]

    def test_offsets_strictly_increasing(self):
        tt = tokenize("one two, three... 四个")
        for (s1, e1), (s2, e2) in zip(tt.offsets, tt.offsets[1:]):
            assert e1 <= s2 and s1 < e1

    def test_idempotent_on_token_sources(self):
        rng = np.random.default_rng(3)
        pieces = ["word", "Mix3d", "...", "!", "的", "12.5"]
        for _ in range(50):
            text = " ".join(rng.choice(pieces, size=6))
            tt = tokenize(text)
            for i in range(len(tt)):
                again = tokenize(tt.token_source(i))
                assert list(again.tokens) == [tt.tokens[i]]


class TestLoadDataset:
    RECORD = {
        "qid": "q1",
        "question": "who wrote it",
        "documents": [{"doc_id": "d1", "title": "t", "paragraphs": ["some text"]}],
        "answers": ["someone"],
    }

    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps(self.RECORD) + "\n")
        examples = list(load_dataset(path))
        assert len(examples) == 1
        assert examples[0].qid == "q1"
        assert examples[0].gold_answers == ["someone"]

    def test_missing_answers_field(self, tmp_path):
        record = {k: v for k, v in self.RECORD.items() if k != "answers"}
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps(record) + "\n")
        (example,) = load_dataset(path)
        assert example.gold_answers == []

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text("not-json\n")
        with pytest.raises(DatasetParseError) as err:
            list(load_dataset(path))
        assert err.value.line_no == 1

    def test_parse_error_on_later_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps(self.RECORD) + "\n{broken\n")
        with pytest.raises(DatasetParseError) as err:
            list(load_dataset(path))
        assert err.value.line_no == 2

    def test_missing_field_named(self):
        record = dict(self.RECORD)
        del record["question"]
        with pytest.raises(DatasetSchemaError) as err:
            parse_record(record)
        assert err.value.field_name == "question"

    def test_missing_doc_field_named(self):
        record = json.loads(json.dumps(self.RECORD))
        del record["documents"][0]["paragraphs"]
        with pytest.raises(DatasetSchemaError) as err:
            parse_record(record)
        assert err.value.field_name == "paragraphs"

    def test_duplicate_doc_id_rejected(self):
        record = json.loads(json.dumps(self.RECORD))
        record["documents"].append(dict(record["documents"][0]))
        with pytest.raises(DatasetSchemaError):
            parse_record(record)

    def test_source_rank_is_position(self):
        record = json.loads(json.dumps(self.RECORD))
        record["documents"].append({"doc_id": "d2", "title": "", "paragraphs": ["x"]})
        example = parse_record(record)
        assert [d.source_rank for d in example.documents] == [0, 1]


def para_of_len(n, tag="w"):
    return " ".join(f"{tag}{i}" for i in range(n))


class TestRestructureParagraphs:
    def test_greedy_merge(self):
        doc = make_doc("d", [para_of_len(200, "a"), para_of_len(300, "b"), para_of_len(250, "c")])
        merged = restructure_paragraphs(doc, max_words=600)
        assert [len(p) for p in merged.paragraphs] == [500, 250]

    def test_oversized_kept_whole(self):
        doc = make_doc("d", [para_of_len(700)])
        merged = restructure_paragraphs(doc, max_words=600)
        assert [len(p) for p in merged.paragraphs] == [700]

    def test_empty_document(self):
        doc = make_doc("d", [])
        assert restructure_paragraphs(doc).paragraphs == []

    def test_total_tokens_preserved(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            lengths = rng.integers(1, 40, size=rng.integers(1, 8))
            doc = make_doc("d", [para_of_len(int(n)) for n in lengths])
            merged = restructure_paragraphs(doc, max_words=50)
            assert sum(len(p) for p in merged.paragraphs) == sum(lengths)

    def test_merged_offsets_recover_tokens(self):
        doc = make_doc("d", ["alpha beta", "gamma delta"])
        merged = restructure_paragraphs(doc, max_words=10)
        para = merged.paragraphs[0]
        assert [para.token_source(i) for i in range(len(para))] == ["alpha", "beta", "gamma", "delta"]

    def test_bad_max_words(self):
        with pytest.raises(ValueError):
            restructure_paragraphs(make_doc("d", ["x"]), max_words=0)


class TestDistantLabel:
    def test_single_match(self):
        ex = make_example([["nothing here", "the city of paris is nice"]], ["paris"])
        labels = distant_label(ex)
        assert labels.doc_labels == [1]
        assert labels.para_labels == [[0, 1]]
        doc_idx, para_idx, start, end = labels.gold_span
        assert (doc_idx, para_idx) == (0, 1)
        para = ex.documents[0].paragraphs[1]
        assert para.tokens[start : end + 1] == ("paris",)

    def test_answer_absent(self):
        ex = make_example([["nothing here"], ["still nothing"]], ["paris"])
        labels = distant_label(ex)
        assert labels.doc_labels == [0, 0]
        assert labels.gold_span is None

    def test_no_answers_given(self):
        ex = make_example([["some text"]], [])
        labels = distant_label(ex)
        assert labels.doc_labels == [0]
        assert labels.gold_span is None

    def test_rank_order_tie_break(self):
        # matches exist in two documents; the span goes to the higher-ranked one
        ex = make_example(
            [["no match"], ["later paris mention"], ["early paris mention"]],
            ["paris"],
        )
        labels = distant_label(ex, doc_order=[2, 1, 0])
        assert labels.gold_span[0] == 2
        labels = distant_label(ex, doc_order=[1, 2, 0])
        assert labels.gold_span[0] == 1

    def test_earliest_match_within_document(self):
        ex = make_example([["paris then paris again", "paris in second paragraph"]], ["paris"])
        labels = distant_label(ex)
        assert labels.gold_span == (0, 0, 0, 0)

    def test_multi_token_answer_with_punctuation(self):
        ex = make_example([["they visited New York, last year"]], ["new york"])
        labels = distant_label(ex)
        assert labels.gold_span is not None
        _, para_idx, start, end = labels.gold_span
        para = ex.documents[0].paragraphs[para_idx]
        assert [normalize_token(t) for t in para.tokens[start : end + 1]] == ["new", "york"]

    def test_doc_label_is_or_of_paragraphs(self):
        rng = np.random.default_rng(11)
        vocab = ["cat", "dog", "fish", "tree", "rock"]
        for _ in range(30):
            paragraph_sets = []
            for _ in range(rng.integers(1, 4)):
                paras = [" ".join(rng.choice(vocab, size=4)) for _ in range(rng.integers(1, 4))]
                paragraph_sets.append(paras)
            ex = make_example(paragraph_sets, ["cat"])
            labels = distant_label(ex)
            for doc_label, para_labels in zip(labels.doc_labels, labels.para_labels):
                assert doc_label == max(para_labels, default=0)

    def test_span_normalizes_to_answer(self):
        ex = make_example([["he said: Paris! and left", "other text"]], ["paris"])
        labels = distant_label(ex)
        _, pi, start, end = labels.gold_span
        para = ex.documents[0].paragraphs[pi]
        text = para.span_text(start, end)
        assert normalize_token(text) == "paris"
