"""Evaluation metrics: P/R/F1 (token and strict span level), attachment
scores, summarization compression rate and keyword overlap, plus a
frequency-based extractive baseline so the summarization metrics have a
system to score end to end."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import Sentence
from .errors import EvaluationError

_PUNCT_STRIP = str.maketrans("", "", string.punctuation)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "ConfusionCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Span:
    label: str
    start: int
    end: int  # exclusive

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty span [{self.start}, {self.end})")


@dataclass
class SummaryScores:
    compression_rate: float
    keyword_overlap: float


def prf(c: ConfusionCounts) -> PRF:
    """Precision, recall, F1 from TP/FP/FN counts; any 0/0 is 0."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(precision=p, recall=r, f1=f1)


def f1_from_pr(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def extract_spans(tags: list[str]) -> list[Span]:
    """Decode maximal B-X (I-X)* runs; a dangling I-X opens a new span."""
    spans: list[Span] = []
    start = None
    label = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-") or (tag.startswith("I-") and tag[2:] != label):
            if start is not None:
                spans.append(Span(label, start, i))
            start, label = i, tag[2:]
        elif tag == "O":
            if start is not None:
                spans.append(Span(label, start, i))
            start, label = None, None
        # I-X continuing the open X run: nothing to do
    if start is not None:
        spans.append(Span(label, start, len(tags)))
    return spans


def span_counts(gold: list[Span], pred: list[Span]) -> ConfusionCounts:
    gold_c = Counter(gold)
    pred_c = Counter(pred)
    tp = sum(min(n, pred_c[s]) for s, n in gold_c.items())
    return ConfusionCounts(tp=tp, fp=len(pred) - tp, fn=len(gold) - tp)


def span_prf(gold: list[Span], pred: list[Span]) -> PRF:
    """Strict entity match: label and both boundaries must agree exactly."""
    return prf(span_counts(gold, pred))


def token_accuracy(gold: list[str], pred: list[str]) -> float:
    if len(gold) != len(pred):
        raise EvaluationError(f"gold has {len(gold)} tags but prediction has {len(pred)}")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def uas_las(
    gold: list[Sentence],
    pred: list[tuple[list[int], list[str | None]]],
) -> tuple[float, float]:
    """Corpus-level attachment scores, micro-averaged over tokens."""
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    total = head_hits = label_hits = 0
    for sent, (heads, labels) in zip(gold, pred):
        if len(heads) != len(sent.tokens) or len(labels) != len(sent.tokens):
            raise EvaluationError(
                f"prediction length {len(heads)} does not match {len(sent.tokens)} tokens"
            )
        for tok, head, label in zip(sent.tokens, heads, labels):
            total += 1
            if tok.head == head:
                head_hits += 1
                if tok.deprel == label:
                    label_hits += 1
    if total == 0:
        return 0.0, 0.0
    return head_hits / total, label_hits / total


def _tokens(text: str) -> list[str]:
    return text.split()


def _normalize(token: str) -> str:
    return token.lower().translate(_PUNCT_STRIP)


def compression_rate(source: str, summary: str) -> float:
    src = _tokens(source)
    if not src:
        raise EvaluationError("source has no tokens")
    return len(_tokens(summary)) / len(src)


def keywords(text: str, k: int, stopwords: frozenset[str] = frozenset()) -> list[str]:
    """Top-k content words by frequency (ties lexicographic), normalized."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts = Counter(
        w for w in (_normalize(t) for t in _tokens(text)) if w and w not in stopwords
    )
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    return ranked[:k]


def keyword_overlap(
    source: str, summary: str, k: int = 10, stopwords: frozenset[str] = frozenset()
) -> float:
    keys = keywords(source, k, stopwords)
    if not keys:
        return 0.0
    summary_types = {w for w in (_normalize(t) for t in _tokens(summary)) if w}
    return sum(key in summary_types for key in keys) / len(keys)


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(text.strip()) if s]


def extractive_baseline(
    source: str, ratio: float, stopwords: frozenset[str] = frozenset()
) -> str:
    """Keep the highest-scoring sentences, in original order, until the token
    budget ratio * |source| is reached (always at least one sentence).

    A sentence's score is the sum of source-wide frequencies of its
    non-stopword tokens.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    sents = split_sentences(source)
    if not sents:
        raise EvaluationError("source has no sentences")
    freqs = Counter(
        w for w in (_normalize(t) for t in _tokens(source)) if w and w not in stopwords
    )
    scores = [
        sum(freqs[w] for w in (_normalize(t) for t in _tokens(s)) if w and w not in stopwords)
        for s in sents
    ]
    budget = ratio * len(_tokens(source))
    order = sorted(range(len(sents)), key=lambda i: (-scores[i], i))
    chosen: set[int] = set()
    total = 0
    for i in order:
        if chosen and total >= budget:
            break
        chosen.add(i)
        total += len(_tokens(sents[i]))
    return " ".join(sents[i] for i in sorted(chosen))


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One token per line, UTF-8, '#' comments; defaults to the bundled list."""
    if path is None:
        text = resources.files("loraseq").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line.lower())
    return frozenset(words)
