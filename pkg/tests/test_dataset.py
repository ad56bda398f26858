import json

import pytest

from bootparse.dataset import (Corpus, Example, ingest_top_tsv, read_corpus, tokenize,
                               write_corpus)
from bootparse.errors import MalformedRow, SchemaVersionMismatch, UnbalancedBrackets
from bootparse.mrl import parse_mrl, serialize_mrl

from conftest import FESTIVALS_MRL, FESTIVALS_TOP


def _write(tmp_path, rows):
    p = tmp_path / "top.tsv"
    p.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return p


def test_ingest_festivals(tmp_path):
    p = _write(tmp_path, [f"Any festivals this weekend\tAny festivals this weekend\t{FESTIVALS_TOP}"])
    corpus, report = ingest_top_tsv(p, "train")
    assert len(corpus) == 1
    ex = corpus[0]
    assert ex.id == "train-1" and ex.lang == "en"
    assert serialize_mrl(ex.mrl) == FESTIVALS_MRL
    assert report.as_dict() == {"read": 1, "kept": 1, "dropped_unsupported": 0, "malformed": 0}


def test_ingest_empty(tmp_path):
    corpus, report = ingest_top_tsv(_write(tmp_path, []), "dev")
    assert len(corpus) == 0 and report.read == 0 and report.kept == 0


def test_ingest_unsupported_row(tmp_path):
    corpus, report = ingest_top_tsv(_write(tmp_path, ["blah\tblah\t[IN:UNSUPPORTED blah ]"]))
    assert len(corpus) == 0 and report.dropped_unsupported == 1 and report.read == 1


def test_ingest_malformed(tmp_path):
    p = _write(tmp_path, ["only\ttwo", f"a\ta\t{FESTIVALS_MRL}"])
    with pytest.raises(MalformedRow, match=":1:"):
        ingest_top_tsv(p)
    corpus, report = ingest_top_tsv(p, skip_malformed=True)
    assert len(corpus) == 1 and report.malformed == 1


def test_ingest_mrl_error_carries_line(tmp_path):
    p = _write(tmp_path, [f"a\ta\t{FESTIVALS_MRL}", "b\tb\t[IN:X [SL:A b"])
    with pytest.raises(UnbalancedBrackets, match=":2:"):
        ingest_top_tsv(p)


def test_ingest_deterministic(tmp_path):
    p = _write(tmp_path, [f"a\tAny festivals this weekend\t{FESTIVALS_TOP}",
                          "x\tx\t[IN:UNSUPPORTED x ]"])
    a, ra = ingest_top_tsv(p)
    b, rb = ingest_top_tsv(p)
    assert a.examples == b.examples and ra == rb


def test_roundtrip_festivals(tmp_path, festivals_example):
    path = tmp_path / "c.jsonl"
    write_corpus(Corpus([festivals_example]), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    rec = json.loads(lines[1])
    assert rec["lang"] == "en" and rec["mrl"] == FESTIVALS_MRL
    assert set(rec) == {"id", "lang", "question_tokens", "mrl", "provenance", "meta"}
    assert read_corpus(path).examples == [festivals_example]


def test_roundtrip_empty(tmp_path):
    path = tmp_path / "c.jsonl"
    write_corpus(Corpus([], "test"), path)
    back = read_corpus(path)
    assert len(back) == 0 and back.split == "test"


def test_roundtrip_japanese(tmp_path):
    toks = ["今週末", "の", "フェスティバル"]
    ex = Example("t-1", "ja", toks, parse_mrl("[IN:GET_EVENT [SL:CATEGORY_EVENT フェスティバル ] ]"),
                 "machine_translated", {"source_id": "t-1"})
    path = tmp_path / "ja.jsonl"
    write_corpus(Corpus([ex]), path)
    back = read_corpus(path)[0]
    assert back == ex
    assert [t.encode() for t in back.question_tokens] == [t.encode() for t in toks]


def test_schema_mismatch(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"schema_version": 99}\n')
    with pytest.raises(SchemaVersionMismatch):
        read_corpus(path)


def test_counts_by_lang(festivals_example):
    it = Example("x", "it", ["a"], parse_mrl("[IN:X ]"))
    assert Corpus([festivals_example, it, festivals_example]).counts_by_lang() == {"en": 2, "it": 1}


@pytest.mark.parametrize("text, lang, expected", [
    ("dove posso vedere i fuochi d'artificio questa sera?", "it",
     ["dove", "posso", "vedere", "i", "fuochi", "d'", "artificio", "questa", "sera", "?"]),
    ("Any festivals this weekend", "en", ["Any", "festivals", "this", "weekend"]),
    ("l'evento dell'anno.", "it", ["l'", "evento", "dell'", "anno", "."]),
    ("今週末のフェスティバル", "ja", ["今週末", "の", "フェスティバル"]),
    ("don't", "en", ["don't"]),
])
def test_tokenize(text, lang, expected):
    assert tokenize(text, lang) == expected
