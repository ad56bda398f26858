"""Corpus records, TOP TSV ingestion and the JSONL corpus format."""
from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, MalformedRow, MrlError, SchemaVersionMismatch
from .mrl import DROPPED, MrlTree, adapt_top_annotation, parse_mrl, serialize_mrl

SCHEMA_VERSION = 1
PROVENANCES = ("human", "machine_translated", "synthetic")
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Example:
    id: str
    lang: str
    question_tokens: tuple[str, ...]
    mrl: MrlTree
    provenance: str = "human"
    meta: dict = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "question_tokens", tuple(self.question_tokens))
        if not self.question_tokens:
            raise DataError(f"example {self.id}: empty question")
        if self.provenance not in PROVENANCES:
            raise DataError(f"example {self.id}: unknown provenance {self.provenance!r}")

    @property
    def question(self) -> str:
        return " ".join(self.question_tokens)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang,
            "question_tokens": list(self.question_tokens),
            "mrl": serialize_mrl(self.mrl),
            "provenance": self.provenance,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Example":
        return cls(
            id=rec["id"],
            lang=rec["lang"],
            question_tokens=rec["question_tokens"],
            mrl=parse_mrl(rec["mrl"]),
            provenance=rec.get("provenance", "human"),
            meta=dict(rec.get("meta", {})),
        )


@dataclass
class Corpus:
    examples: list[Example] = field(default_factory=list)
    split: str = "train"

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def langs(self) -> set[str]:
        return {e.lang for e in self.examples}

    def counts_by_lang(self) -> dict[str, int]:
        return dict(sorted(Counter(e.lang for e in self.examples).items()))

    def by_id(self) -> dict[str, Example]:
        return {e.id: e for e in self.examples}


@dataclass
class IngestReport:
    read: int = 0
    kept: int = 0
    dropped_unsupported: int = 0
    malformed: int = 0

    def as_dict(self):
        return {"read": self.read, "kept": self.kept,
                "dropped_unsupported": self.dropped_unsupported,
                "malformed": self.malformed}


# -- tokenization -----------------------------------------------------------

_ELISION = re.compile(r"^([^\W\d_]+['’])(\w.*)$")
_TRAILING_PUNCT = ".,!?;:"
ELIDING_LANGS = {"it", "fr", "ca"}


def _script(ch: str) -> str:
    if ch.isdigit():
        return "digit"
    name = unicodedata.name(ch, "")
    for script in ("HIRAGANA", "KATAKANA", "CJK", "HANGUL"):
        if name.startswith(script):
            return script
    if ch == "ー":
        return "KATAKANA"
    if unicodedata.category(ch).startswith("P"):
        return "punct:" + ch
    return "other"


def _segment_cjk(chunk: str) -> list[str]:
    # script-run segmentation; a coarse stand-in for full word-boundary rules
    out, cur, cur_script = [], "", None
    for ch in chunk:
        s = _script(ch)
        if cur and (s != cur_script or s.startswith("punct:")):
            out.append(cur)
            cur = ""
        cur += ch
        cur_script = s
    if cur:
        out.append(cur)
    return out


def _has_cjk(text: str) -> bool:
    return any(_script(ch) in ("HIRAGANA", "KATAKANA", "CJK") for ch in text)


def tokenize(text: str, lang: str = "en") -> list[str]:
    """Whitespace tokenization with final punctuation detached.

    For languages with article elision the elided prefix becomes its own token:
    ``"i fuochi d'artificio?"`` becomes ``["i", "fuochi", "d'", "artificio", "?"]``.
    Japanese text without spaces is split at script boundaries.
    """
    tokens = []
    for chunk in text.split():
        if lang == "ja" and _has_cjk(chunk):
            tokens.extend(_segment_cjk(chunk))
            continue
        tail = []
        while len(chunk) > 1 and chunk[-1] in _TRAILING_PUNCT:
            tail.insert(0, chunk[-1])
            chunk = chunk[:-1]
        m = _ELISION.match(chunk) if lang in ELIDING_LANGS else None
        if m:
            tokens.extend([m.group(1), m.group(2)])
        else:
            tokens.append(chunk)
        tokens.extend(tail)
    return tokens


# -- TOP ingestion ----------------------------------------------------------

def ingest_top_tsv(path, split: str = "train", lang: str = "en",
                   skip_malformed: bool = False) -> tuple[Corpus, IngestReport]:
    """Read a TOP TSV file (raw utterance, tokenized utterance, annotation)."""
    report = IngestReport()
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            report.read += 1
            cols = line.split("\t")
            try:
                if len(cols) != 3:
                    raise MalformedRow(f"{path}:{lineno}: expected 3 columns, got {len(cols)}")
                _, tokenized, annotation = cols
                tree = adapt_top_annotation(annotation)
                if tree is DROPPED:
                    report.dropped_unsupported += 1
                    continue
                tokens = tokenized.split()
                if not tokens:
                    raise MalformedRow(f"{path}:{lineno}: empty utterance")
            except MrlError as exc:
                if not skip_malformed:
                    raise type(exc)(f"{path}:{lineno}: {exc}") from exc
                report.malformed += 1
                continue
            except MalformedRow:
                if not skip_malformed:
                    raise
                report.malformed += 1
                continue
            examples.append(Example(f"{split}-{lineno}", lang, tokens, tree, "human"))
            report.kept += 1
    return Corpus(examples, split), report


# -- corpus files -----------------------------------------------------------

def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {"schema_version": SCHEMA_VERSION, "split": corpus.split}
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for ex in corpus.examples:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def read_corpus(path) -> Corpus:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise SchemaVersionMismatch(f"{path}: missing header record")
        header = json.loads(first)
        if header.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"{path}: schema_version {header.get('schema_version')!r}, expected {SCHEMA_VERSION}")
        examples = []
        seen = set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                ex = Example.from_record(json.loads(line))
            except (KeyError, json.JSONDecodeError, MrlError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if ex.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {ex.id!r}")
            seen.add(ex.id)
            examples.append(ex)
    return Corpus(examples, header.get("split", "train"))
