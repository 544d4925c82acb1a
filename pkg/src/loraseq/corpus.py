"""Corpus ingestion: CoNLL-U, IOB TSV, labeled CSV, JSONL summary pairs.

Also owns the seeded 80-20 split, vocabulary construction, and synthetic
fixture generation (the fixtures have known generating rules so that
learnability and metric checks have exact oracles).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError
from .numerics import SeededRng

PAD_ID = 0
UNK_ID = 1
ROOT_ID = 2

_IOB_TAG = re.compile(r"^(O|[BI]-\S+)$")


@dataclass
class Token:
    form: str
    upos: str | None = None
    head: int | None = None  # 0 = ROOT, otherwise 1-based token index
    deprel: str | None = None
    iob: str | None = None


@dataclass
class Sentence:
    tokens: list[Token]
    id: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class SummaryPair:
    source: str
    reference: str
    system: str | None = None


@dataclass
class LabeledRecord:
    text: str
    label: str


@dataclass
class Vocab:
    token_to_id: dict[str, int] = field(default_factory=dict)

    def id_of(self, form: str) -> int:
        return self.token_to_id.get(form, UNK_ID)

    def __len__(self) -> int:
        return len(self.token_to_id) + 3  # PAD, UNK, ROOT


def parse_conllu(text: str) -> list[Sentence]:
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    sent_id = None
    start_line = 0

    def flush(line_no: int):
        nonlocal tokens, sent_id
        if not tokens:
            return
        for i, tok in enumerate(tokens, start=1):
            if tok.head is not None and not (0 <= tok.head <= len(tokens) and tok.head != i):
                raise ParseError(
                    f"line {start_line}: head {tok.head} out of range for token {i} "
                    f"in a {len(tokens)}-token sentence"
                )
        sentences.append(Sentence(tokens=tokens, id=sent_id))
        tokens = []
        sent_id = None

    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*sent_id\s*=\s*(\S+)", line)
            if m:
                sent_id = m.group(1)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"line {line_no}: expected 10 tab-separated columns, got {len(cols)}")
        tid = cols[0]
        if "-" in tid or "." in tid:  # multiword range or empty node
            continue
        if not tokens:
            start_line = line_no
        head_col = cols[6]
        if head_col == "_":
            head = None
        else:
            try:
                head = int(head_col)
            except ValueError:
                raise ParseError(f"line {line_no}: non-integer HEAD {head_col!r}") from None
        tokens.append(
            Token(
                form=cols[1],
                upos=None if cols[3] == "_" else cols[3],
                head=head,
                deprel=None if cols[7] == "_" else cols[7],
            )
        )
    flush(len(text.splitlines()) + 1)
    return sentences


def sentence_to_conllu(sentence: Sentence) -> str:
    lines = []
    if sentence.id is not None:
        lines.append(f"# sent_id = {sentence.id}")
    for i, tok in enumerate(sentence.tokens, start=1):
        lines.append(
            "\t".join(
                [
                    str(i),
                    tok.form,
                    "_",
                    tok.upos if tok.upos is not None else "_",
                    "_",
                    "_",
                    str(tok.head) if tok.head is not None else "_",
                    tok.deprel if tok.deprel is not None else "_",
                    "_",
                    "_",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def sentences_to_conllu(sentences: list[Sentence]) -> str:
    return "\n".join(sentence_to_conllu(s) for s in sentences)


def parse_iob(text: str) -> list[Sentence]:
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            if tokens:
                sentences.append(Sentence(tokens=tokens))
                tokens = []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"line {line_no}: expected 'token<TAB>tag', got {line!r}")
        form, tag = parts
        if not _IOB_TAG.match(tag):
            raise ParseError(f"line {line_no}: malformed IOB tag {tag!r}")
        tokens.append(Token(form=form, iob=tag))
    if tokens:
        sentences.append(Sentence(tokens=tokens))
    return sentences


def sentences_to_iob(sentences: list[Sentence]) -> str:
    blocks = []
    for sent in sentences:
        blocks.append("\n".join(f"{t.form}\t{t.iob}" for t in sent.tokens))
    return "\n\n".join(blocks) + "\n"


def parse_labeled_csv(text: str) -> list[LabeledRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("row 1: missing 'text,label' header") from None
    if header != ["text", "label"]:
        raise ParseError(f"row 1: expected header ['text', 'label'], got {header}")
    records = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"row {row_no}: expected 2 fields, got {len(row)}")
        records.append(LabeledRecord(text=row[0], label=row[1]))
    return records


def parse_summary_pairs(text: str) -> list[SummaryPair]:
    pairs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {line_no}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict) or "source" not in doc:
            raise ParseError(f"line {line_no}: missing required key 'source'")
        pairs.append(
            SummaryPair(
                source=doc["source"],
                reference=doc.get("reference", ""),
                system=doc.get("system"),
            )
        )
    return pairs


def split_80_20(items: list, seed: int, ratio: float = 0.8) -> tuple[list, list]:
    """Seeded shuffle, then split at floor(ratio * n)."""
    n = len(items)
    order = SeededRng(seed).permutation(n)
    cut = math.floor(ratio * n)
    train = [items[i] for i in order[:cut]]
    test = [items[i] for i in order[cut:]]
    return train, test


def build_vocab(sentences: list[Sentence], min_freq: int = 1) -> Vocab:
    counts = Counter(tok.form for sent in sentences for tok in sent.tokens)
    eligible = sorted(
        (form for form, c in counts.items() if c >= min_freq),
        key=lambda form: (-counts[form], form),
    )
    return Vocab({form: ROOT_ID + 1 + i for i, form in enumerate(eligible)})


# --- synthetic fixtures -------------------------------------------------

_FIXTURE_TAGS = ["NOUN", "VERB", "ADJ", "DET", "ADV"]
_FIXTURE_DEPRELS = ["nsubj", "obj", "obl", "det", "advmod"]
_NER_PERSONS = [("juan", "cruz"), ("maria", "santos"), ("pedro", "reyes")]
_NER_LOCATIONS = ["manila", "cebu", "davao", "quezon"]
_NER_FILLER = ["ang", "sa", "ay", "niya", "siya", "dito", "bukas", "araw", "bayan", "ngayon"]


def _fixture_word(i: int) -> str:
    return f"w{i:02d}"


def fixture_tag_of(form: str) -> str:
    """Generating rule of the tagging fixture: tag is a function of the word."""
    return _FIXTURE_TAGS[int(form[1:]) % len(_FIXTURE_TAGS)]


def fixture_deprel_of(position: int, form: str) -> str:
    """Generating rule of the parsing fixture: root for token 1, else word-determined."""
    if position == 1:
        return "root"
    return _FIXTURE_DEPRELS[int(form[1:]) % len(_FIXTURE_DEPRELS)]


def make_fixture(kind: str, size: int, seed: int, out_dir) -> Path:
    """Write a synthetic corpus with exactly known generating rules.

    tagging: CoNLL-U, UPOS determined by token identity.
    parsing: CoNLL-U, head of token i is i-1 (token 1 attaches to ROOT).
    ner:     IOB TSV, entities drawn from a fixed gazetteer.
    summary: JSONL source/reference pairs.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = SeededRng(seed)
    vocab = [_fixture_word(i) for i in range(20)]

    if kind in ("tagging", "parsing"):
        sentences = []
        for si in range(size):
            length = rng.integers(3, 10)
            forms = [rng.choice(vocab) for _ in range(length)]
            toks = []
            for pos, form in enumerate(forms, start=1):
                head = (pos - 1) if kind == "parsing" else None
                deprel = fixture_deprel_of(pos, form) if kind == "parsing" else None
                toks.append(Token(form=form, upos=fixture_tag_of(form), head=head, deprel=deprel))
            sentences.append(Sentence(tokens=toks, id=f"fix-{si}"))
        path = out_dir / f"{kind}.conllu"
        path.write_text(sentences_to_conllu(sentences), encoding="utf-8")
        return path

    if kind == "ner":
        sentences = []
        for _ in range(size):
            toks = []
            n_chunks = rng.integers(2, 6)
            for _ in range(n_chunks):
                kind_roll = rng.integers(0, 3)
                if kind_roll == 0:
                    first, last = _NER_PERSONS[rng.integers(0, len(_NER_PERSONS))]
                    toks.append(Token(form=first, iob="B-PER"))
                    toks.append(Token(form=last, iob="I-PER"))
                elif kind_roll == 1:
                    toks.append(Token(form=rng.choice(_NER_LOCATIONS), iob="B-LOC"))
                else:
                    toks.append(Token(form=rng.choice(_NER_FILLER), iob="O"))
            sentences.append(Sentence(tokens=toks))
        path = out_dir / "ner.iob"
        path.write_text(sentences_to_iob(sentences), encoding="utf-8")
        return path

    if kind == "summary":
        lines = []
        for _ in range(size):
            n_sents = rng.integers(2, 5)
            sents = []
            for _ in range(n_sents):
                length = rng.integers(4, 9)
                sents.append(" ".join(rng.choice(_NER_FILLER) for _ in range(length)) + ".")
            source = " ".join(sents)
            lines.append(json.dumps({"source": source, "reference": sents[0]}))
        path = out_dir / "summary.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    raise ValueError(f"unknown fixture kind {kind!r}")
