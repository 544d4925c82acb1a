"""Command-line entry point.

Subcommands:
  fixture   generate synthetic corpora with known generating rules
  train     LoRA fine-tune the toy encoder on a tagging/NER/parsing corpus
  eval      score a checkpoint on the held-out split, write a JSON report
  sum-eval  score summaries (compression rate, keyword overlap, correlation)
  compare   paired t-test between two models' per-task scores

Exit codes: 0 success, 1 evaluation/degenerate errors, 2 input/config errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .corpus import (
    Sentence,
    Vocab,
    build_vocab,
    make_fixture,
    parse_conllu,
    parse_iob,
    parse_summary_pairs,
    split_80_20,
)
from .encoder import (
    ModelConfig,
    build_model,
    make_optimizer,
    model_from_dict,
    model_to_dict,
    predict_arcs,
    predict_tags,
    train_step,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateSampleError,
    EvaluationError,
    ParseError,
)
from .metrics import (
    ConfusionCounts,
    extract_spans,
    extractive_baseline,
    compression_rate,
    keyword_overlap,
    load_stopwords,
    span_counts,
    prf,
    token_accuracy,
    uas_las,
)
from .numerics import SeededRng
from .stats import PairedSample, compare_models

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1

EXIT_OK = 0
EXIT_EVAL = 1
EXIT_INPUT = 2


def _report_skeleton(task: str, seed: int, config_echo: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "task": task,
        "seed": seed,
        "config": config_echo,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _load_sentences(task: str, path: str) -> list[Sentence]:
    text = Path(path).read_text(encoding="utf-8")
    if task == "ner":
        return parse_iob(text)
    return parse_conllu(text)


def _sentence_ids(vocab: Vocab, sent: Sentence) -> list[int]:
    return [vocab.id_of(tok.form) for tok in sent.tokens]


def _tag_inventory(task: str, sentences: list[Sentence]) -> list[str]:
    if task == "ner":
        tags = {tok.iob for s in sentences for tok in s.tokens}
    else:
        tags = {tok.upos for s in sentences for tok in s.tokens}
    if None in tags:
        raise DataError(f"corpus lacks the annotations required for task {task!r}")
    return sorted(tags)


def _deprel_inventory(sentences: list[Sentence]) -> list[str]:
    rels = {tok.deprel for s in sentences for tok in s.tokens}
    if None in rels:
        raise DataError("corpus lacks deprel annotations required for task 'dep'")
    return sorted(rels)


def _make_batch(task, sentences, vocab, tag_to_id, deprel_to_id):
    batch = []
    for sent in sentences:
        ids = _sentence_ids(vocab, sent)
        if task == "dep":
            heads = [tok.head for tok in sent.tokens]
            if any(h is None for h in heads):
                raise DataError("sentence lacks head annotations")
            deprels = [deprel_to_id[tok.deprel] for tok in sent.tokens]
            batch.append((ids, (heads, deprels)))
        else:
            key = (lambda t: t.iob) if task == "ner" else (lambda t: t.upos)
            batch.append((ids, [tag_to_id[key(tok)] for tok in sent.tokens]))
    return batch


# --- subcommands --------------------------------------------------------


def cmd_fixture(args) -> int:
    path = make_fixture(args.kind, args.size, args.seed, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    sentences = _load_sentences(args.task, args.data)
    if not sentences:
        raise ParseError(f"{args.data}: no sentences found")
    train, _ = split_80_20(sentences, args.seed, args.ratio)
    if not train:
        raise DataError("training split is empty; need more sentences")
    vocab = build_vocab(train)
    tags = _tag_inventory(args.task, sentences) if args.task != "dep" else ["_"]
    deprels = _deprel_inventory(sentences) if args.task == "dep" else ["_"]
    config = ModelConfig(
        vocab_size=len(vocab),
        n_tags=len(tags),
        n_deprels=len(deprels),
        d_model=args.d_model,
        n_heads=args.n_heads,
        n_layers=args.n_layers,
        max_len=args.max_len,
        lora_rank=args.rank,
        lora_alpha=args.alpha,
    )
    model = build_model(config, SeededRng(args.seed))
    opt = make_optimizer(model, lr=args.lr)
    tag_to_id = {t: i for i, t in enumerate(tags)}
    deprel_to_id = {r: i for i, r in enumerate(deprels)}
    batch_all = _make_batch(args.task, train, vocab, tag_to_id, deprel_to_id)
    task_kind = "arc" if args.task == "dep" else "tag"
    loss = float("nan")
    for step in range(args.steps):
        lo = (step * args.batch_size) % len(batch_all)
        batch = batch_all[lo : lo + args.batch_size]
        if not batch:
            batch = batch_all[:args.batch_size]
        loss = train_step(model, batch, task_kind, opt)
        print(f"step {step + 1} loss {loss:.6f}")
    ckpt = {
        "version": CHECKPOINT_VERSION,
        "task": args.task,
        "seed": args.seed,
        "ratio": args.ratio,
        "steps": args.steps,
        "vocab": vocab.token_to_id,
        "tags": tags,
        "deprels": deprels,
        "model": model_to_dict(model),
    }
    Path(args.out).write_text(json.dumps(ckpt), encoding="utf-8")
    print(f"wrote checkpoint {args.out} (final loss {loss:.6f})")
    return EXIT_OK


def _load_checkpoint(path: str):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    model = model_from_dict(doc["model"])
    return doc, model


def cmd_eval(args) -> int:
    doc, model = _load_checkpoint(args.ckpt)
    task = args.task or doc["task"]
    if task != doc["task"]:
        raise ConfigError(f"checkpoint was trained for {doc['task']!r}, not {task!r}")
    sentences = _load_sentences(task, args.data)
    seed = args.seed if args.seed is not None else doc["seed"]
    _, test = split_80_20(sentences, seed, doc["ratio"])
    if not test:
        raise EvaluationError("test split is empty")
    vocab = Vocab(doc["vocab"])
    tags = doc["tags"]
    deprels = doc["deprels"]
    metrics: dict[str, float] = {}

    if task == "dep":
        preds = []
        for sent in test:
            if args.oracle:
                preds.append(([t.head for t in sent.tokens], [t.deprel for t in sent.tokens]))
            else:
                heads, label_ids = predict_arcs(model, _sentence_ids(vocab, sent))
                preds.append((heads, [deprels[i] for i in label_ids]))
        uas, las = uas_las(test, preds)
        metrics["uas"] = uas
        metrics["las"] = las
    else:
        gold_all, pred_all = [], []
        counts = ConfusionCounts()
        for sent in test:
            gold = [t.iob if task == "ner" else t.upos for t in sent.tokens]
            if args.oracle:
                pred = list(gold)
            else:
                pred = [tags[i] for i in predict_tags(model, _sentence_ids(vocab, sent))]
            gold_all.extend(gold)
            pred_all.extend(pred)
            if task == "ner":
                counts.add(span_counts(extract_spans(gold), extract_spans(pred)))
        metrics["accuracy"] = token_accuracy(gold_all, pred_all)
        if task == "ner":
            res = prf(counts)
            metrics["precision"] = res.precision
            metrics["recall"] = res.recall
            metrics["f1"] = res.f1
        else:
            # one tag per token: micro precision = recall = f1 = accuracy
            metrics["precision"] = metrics["accuracy"]
            metrics["recall"] = metrics["accuracy"]
            metrics["f1"] = metrics["accuracy"]

    report = _report_skeleton(task, seed, doc["model"]["config"])
    report["model_id"] = Path(args.ckpt).stem
    report["metrics"] = metrics
    report["sizes"] = {"total": len(sentences), "test": len(test)}
    _write_json(report, args.out)
    return EXIT_OK


def _pearson(xs: list[float], ys: list[float]) -> float | None:
    n = len(xs)
    if n < 2:
        return None
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def cmd_sum_eval(args) -> int:
    pairs = parse_summary_pairs(Path(args.pairs).read_text(encoding="utf-8"))
    if not pairs:
        raise ParseError(f"{args.pairs}: no summary pairs found")
    stopwords = load_stopwords(args.stopwords)
    rows = []
    for i, pair in enumerate(pairs):
        summary = pair.system
        if summary is None:
            summary = extractive_baseline(pair.source, args.ratio, stopwords)
        rows.append(
            {
                "pair": i,
                "compression_rate": compression_rate(pair.source, summary),
                "keyword_overlap": keyword_overlap(pair.source, summary, args.k, stopwords),
            }
        )
    comp = [r["compression_rate"] for r in rows]
    ovl = [r["keyword_overlap"] for r in rows]
    report = _report_skeleton("sum", args.seed, {"ratio": args.ratio, "k": args.k})
    report["metrics"] = {
        "mean_compression_rate": sum(comp) / len(comp),
        "mean_keyword_overlap": sum(ovl) / len(ovl),
        "pearson_correlation": _pearson(comp, ovl),
    }
    report["pairs"] = rows
    report["sizes"] = {"pairs": len(rows)}
    _write_json(report, args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    import csv

    with open(args.scores, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["task", "model_a", "model_b"]:
            raise ParseError(f"expected header 'task,model_a,model_b', got {header}")
        labels, a, b = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"row {row_no}: expected 3 fields, got {len(row)}")
            labels.append(row[0])
            try:
                a.append(float(row[1]))
                b.append(float(row[2]))
            except ValueError:
                raise ParseError(f"row {row_no}: non-numeric score") from None
    if len(labels) < 2:
        raise EvaluationError("need >= 2 paired observations")
    expected = {}
    if args.expected_t is not None:
        expected["t"] = args.expected_t
    if args.expected_df is not None:
        expected["df"] = float(args.expected_df)
    if args.expected_p is not None:
        expected["p"] = args.expected_p
    report = compare_models(PairedSample(labels, a, b), args.alpha, expected or None)
    doc = dataclasses.asdict(report)
    print(f"n            {report.n}")
    print(f"df           {report.df}")
    print(f"mean A / B   {report.mean_a:.4f} / {report.mean_b:.4f}")
    print(f"var  A / B   {report.var_a:.4f} / {report.var_b:.4f}")
    print(f"t            {report.t:.4f}")
    print(f"p (2-tailed) {report.p_two_tailed:.4f}")
    print(f"critical     {report.critical:.4f} (alpha {report.alpha})")
    print(f"verdict      {report.verdict}")
    for note in report.mismatches:
        print(f"MISMATCH     {note}")
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loraseq", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic corpus")
    p.add_argument("--kind", required=True, choices=["tagging", "parsing", "ner", "summary"])
    p.add_argument("--size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("train", help="LoRA fine-tune on a corpus")
    p.add_argument("--task", required=True, choices=["ner", "pos", "dep"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--alpha", type=float, default=8.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    p.add_argument("--task", choices=["ner", "pos", "dep"])
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seed", type=int, default=None, help="split seed (default: from checkpoint)")
    p.add_argument("--oracle", action="store_true", help="score gold against itself")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sum-eval", help="score summaries")
    p.add_argument("--pairs", required=True, help="JSONL source/reference[/system] file")
    p.add_argument("--ratio", type=float, default=0.3, help="extractive baseline token budget")
    p.add_argument("--k", type=int, default=10, help="number of source keywords")
    p.add_argument("--stopwords", help="stopword file (default: bundled list)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_sum_eval)

    p = sub.add_parser("compare", help="paired t-test between two models")
    p.add_argument("--scores", required=True, help="CSV with header task,model_a,model_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--expected-t", type=float, default=None)
    p.add_argument("--expected-df", type=int, default=None)
    p.add_argument("--expected-p", type=float, default=None)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, DataError, FileNotFoundError, NotADirectoryError,
            PermissionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EvaluationError, DegenerateSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
