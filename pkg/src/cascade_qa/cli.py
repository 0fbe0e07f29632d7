"""Command-line entry points for the full pipeline lifecycle.

Training, prediction, evaluation and benchmarking run locally against the
paths in the JSON config; ``serve`` starts the HTTP service and ``ask`` is a
thin client that posts one question to a running server.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.request
from pathlib import Path

from .config import ConfigError, load_config
from .corpus import distant_label
from .evaluate import bench_latency, run_eval
from .pipeline import (
    build_vocab,
    corpus_stats_from_examples,
    doc_ranker_rows,
    load_examples,
    load_pipeline,
    para_ranker_rows,
    prepare_reader_example,
)
from .rankers import LinearRanker, LinearRankerConfig, TreeBoostConfig, TreeEnsemble, train_linear_ranker, train_tree_ensemble
from .reader import init_reader_params, save_reader_checkpoint
from .trainer import TrainPlan, train_auxiliary, train_joint


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text)
    else:
        print(text)


def _load_split(cfg, name: str):
    path = cfg.require_path(name, must_exist=True)
    return load_examples(path, cfg.max_paragraph_words)


def cmd_ingest(args) -> int:
    cfg = _config(args)
    examples = _load_split(cfg, "train")
    n_docs = sum(len(ex.documents) for ex in examples)
    n_paras = sum(len(doc.paragraphs) for ex in examples for doc in ex.documents)
    with_answers = sum(1 for ex in examples if ex.gold_answers)
    span_labelable = sum(1 for ex in examples if ex.gold_answers and distant_label(ex).has_span)
    _emit(
        {
            "examples": len(examples),
            "documents": n_docs,
            "paragraphs": n_paras,
            "with_answers": with_answers,
            "span_labelable": span_labelable,
        },
        args.out,
    )
    return 0


def cmd_stats(args) -> int:
    cfg = _config(args)
    examples = _load_split(cfg, "train")
    stats = corpus_stats_from_examples(examples)
    out = args.out or str(cfg.require_path("stats"))
    Path(out).write_text(json.dumps(stats.to_json()))
    print(f"stats over {stats.doc_count} documents written to {out}")
    return 0


def _load_stats(cfg):
    from .features import CorpusStats

    path = cfg.require_path("stats", must_exist=True)
    return CorpusStats.from_json(json.loads(path.read_text()))


def cmd_train_doc_ranker(args) -> int:
    cfg = _config(args)
    examples = _load_split(cfg, "train")
    stats = _load_stats(cfg)
    rows = doc_ranker_rows(examples, stats)
    model = train_linear_ranker(
        rows,
        LinearRankerConfig(l2=cfg.doc_ranker.l2, epochs=cfg.doc_ranker.epochs, step_size=cfg.doc_ranker.step_size),
    )
    out = args.out or str(cfg.require_path("doc_ranker"))
    model.save(out)
    print(f"document ranker trained on {len(rows)} rows, final loss {model.loss_curve[-1]:.4f}, saved to {out}")
    return 0


def cmd_train_para_ranker(args) -> int:
    cfg = _config(args)
    examples = _load_split(cfg, "train")
    stats = _load_stats(cfg)
    doc_ranker = LinearRanker.load(cfg.require_path("doc_ranker", must_exist=True))
    rows = para_ranker_rows(examples, stats, doc_ranker, cfg.k_documents)
    model = train_tree_ensemble(
        rows,
        TreeBoostConfig(
            rounds=cfg.para_ranker.rounds,
            max_depth=cfg.para_ranker.max_depth,
            shrinkage=cfg.para_ranker.shrinkage,
            reg_lambda=cfg.para_ranker.reg_lambda,
            min_gain=cfg.para_ranker.min_gain,
        ),
    )
    out = args.out or str(cfg.require_path("para_ranker"))
    model.save(out)
    print(f"paragraph ranker trained on {len(rows)} rows, final loss {model.loss_curve[-1]:.4f}, saved to {out}")
    return 0


def cmd_train_reader(args) -> int:
    cfg = _config(args)
    train_examples = _load_split(cfg, "train")
    stats = _load_stats(cfg)
    doc_ranker = LinearRanker.load(cfg.require_path("doc_ranker", must_exist=True))
    para_ranker = TreeEnsemble.load(cfg.require_path("para_ranker", must_exist=True))
    reader_path = cfg.require_path("reader")

    vocab = build_vocab(train_examples)
    store = init_reader_params(cfg.reader, vocab.n_words, vocab.n_chars, seed=cfg.seed)
    prepared = [
        prepare_reader_example(ex, stats, doc_ranker, para_ranker, vocab, cfg.k_documents, cfg.n_paragraphs)
        for ex in train_examples
    ]
    dev_prepared = None
    if cfg.path("dev") is not None:
        dev_examples = _load_split(cfg, "dev")
        dev_prepared = [
            prepare_reader_example(ex, stats, doc_ranker, para_ranker, vocab, cfg.k_documents, cfg.n_paragraphs)
            for ex in dev_examples
        ]

    log_path = Path(str(reader_path) + ".log.jsonl")
    log_path.write_text("")
    aux_plan = TrainPlan(stage="auxiliary", epochs=cfg.train.aux_epochs, seed=cfg.seed, dev_metric=cfg.train.dev_metric)
    aux = train_auxiliary(prepared, store, cfg.reader, aux_plan, log_path=log_path)
    joint_plan = TrainPlan(
        stage="joint",
        epochs=cfg.train.joint_epochs,
        patience=cfg.train.patience,
        seed=cfg.seed,
        dev_metric=cfg.train.dev_metric,
    )
    result = train_joint(prepared, store, cfg.reader, aux.snapshot, joint_plan, dev=dev_prepared, log_path=log_path)
    save_reader_checkpoint(reader_path, store, cfg.reader, vocab, stage="joint")
    final = result.history[-1]
    best = f", best dev {result.best_dev:.4f}" if result.best_dev is not None else ""
    print(f"reader trained: joint loss {final.loss_total:.4f} after {len(result.history)} epoch(s){best}, saved to {reader_path}")
    return 0


def cmd_predict(args) -> int:
    cfg = _config(args)
    pipeline = load_pipeline(cfg)
    examples = _load_split(cfg, args.split)
    rows = []
    for ex in examples:
        result = pipeline.answer_example(ex)
        rows.append(
            {
                "qid": ex.qid,
                "answer": result.answer,
                "score": result.score,
                "doc_id": result.doc_id,
                "paragraph_index": result.para_index,
                "span": list(result.span),
            }
        )
    text = "\n".join(json.dumps(r) for r in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    pipeline = load_pipeline(cfg)
    examples = _load_split(cfg, args.split)
    report = run_eval(pipeline, examples)
    if args.out:
        report.save(args.out)
    summary = "  ".join(f"{k}={v:.4f}" for k, v in sorted(report.aggregates.items()))
    print(f"{report.count} questions  {summary}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    pipeline = load_pipeline(cfg)
    examples = _load_split(cfg, args.split)
    report = bench_latency(
        pipeline,
        examples,
        k_values=cfg.bench.k_values,
        n_values=cfg.bench.n_values,
        batch_size=cfg.bench.batch_size,
        repetitions=cfg.bench.repetitions,
        quality_metric=cfg.bench.metric,
    )
    print(report.to_table())
    if args.out:
        report.save(args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _config(args)
    app = create_app(load_pipeline(cfg))
    uvicorn.run(app, host=args.host, port=cfg.serve_port, log_level="warning")
    return 0


def cmd_ask(args) -> int:
    documents = json.loads(Path(args.documents).read_text())
    payload = json.dumps({"question": args.question, "documents": documents}).encode()
    request = urllib.request.Request(
        args.url.rstrip("/") + "/v1/answer",
        data=payload,
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(request) as response:
        body = json.loads(response.read())
    print(json.dumps(body, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-qa", description="Cascade-ranked multi-document question answering")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON pipeline config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path")

    for name, func in (
        ("ingest", cmd_ingest),
        ("stats", cmd_stats),
        ("train-doc-ranker", cmd_train_doc_ranker),
        ("train-para-ranker", cmd_train_para_ranker),
        ("train-reader", cmd_train_reader),
    ):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("predict")
    common(p)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval")
    common(p)
    p.add_argument("--split", choices=("train", "dev", "test"), default="dev")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench")
    common(p)
    p.add_argument("--split", choices=("train", "dev", "test"), default="dev")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("ask", help="thin client for a running server")
    p.add_argument("--url", default="http://127.0.0.1:8131")
    p.add_argument("--question", required=True)
    p.add_argument("--documents", required=True, help="JSON file with the documents array")
    p.set_defaults(func=cmd_ask)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
