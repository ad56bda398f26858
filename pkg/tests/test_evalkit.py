import math

import pytest
from hypothesis import given, settings, strategies as st

from bootparse import synthetic
from bootparse.errors import IdMismatch, LengthMismatch
from bootparse.evalkit import (EMPTY_FILTER, EvalReport, FilterList, corpus_bleu, exact_match,
                               filtered_match, run_harness)
from bootparse.translate import IdentityBackend

ARTICLE_GOLD = "[IN:GET_EVENT [SL:CATEGORY_EVENT i fuochi d'artificio ] [SL:DATE_TIME questa sera ]]"
ARTICLE_PRED = "[IN:GET_EVENT [SL:CATEGORY_EVENT fuochi artificio ] [SL:DATE_TIME questa sera ]]"


def test_self_identity():
    golds = {str(i): str(e.mrl) for i, e in enumerate(synthetic.generate(30))}
    assert exact_match(golds, golds).exact_match_accuracy == 1.0


def test_half_right():
    golds = {"a": "[IN:A ]", "b": "[IN:B ]"}
    rep = exact_match({"a": "[IN:A ]", "b": "[IN:C ]"}, golds)
    assert rep.exact_match_accuracy == 0.5
    assert rep.mismatches == [("b", "[IN:B ]", "[IN:C ]")]
    assert rep.per_intent == {"IN:A": 1.0, "IN:B": 0.0}


def test_article_pair():
    g, p = {"x": ARTICLE_GOLD}, {"x": ARTICLE_PRED}
    assert exact_match(p, g).exact_match_accuracy == 0.0
    rep = filtered_match(p, g, FilterList.shipped("it"))
    assert rep.filtered_accuracy == 1.0 and rep.exact_match_accuracy == 0.0


def test_filter_leaves_structure_alone():
    flt = FilterList("xx", frozenset({"]", "[sl:a", "la"}))
    assert flt.apply(["[IN:X", "[SL:A", "la", "casa", "]", "]"]) == ["[IN:X", "[SL:A", "casa", "]", "]"]


def test_shipped_lists():
    it, ja = FilterList.shipped("it"), FilterList.shipped("ja")
    assert {"il", "d'", "delle"} <= it.tokens and len(it.tokens) == 18
    assert {"は", "から", "まで"} <= ja.tokens and len(ja.tokens) == 12


def test_filter_file(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("The\nA\n\nthe\n", encoding="utf-8")
    assert FilterList.from_file(p, "en").tokens == {"the", "a"}


def test_id_mismatch():
    with pytest.raises(IdMismatch):
        exact_match({"a": "[IN:A ]"}, {"b": "[IN:A ]"})


def _mrl_strings():
    words = st.sampled_from(["la", "casa", "il", "d'arte", "rosso", "i"])
    leaf = st.lists(words, min_size=1, max_size=3).map(lambda ws: "[SL:S " + " ".join(ws) + " ]")
    return st.lists(leaf, max_size=3).map(lambda ls: "[IN:X " + " ".join(ls) + " ]")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(_mrl_strings(), _mrl_strings()), min_size=1, max_size=6))
def test_filter_properties(pairs):
    golds = {str(i): g for i, (g, _) in enumerate(pairs)}
    preds = {str(i): p for i, (_, p) in enumerate(pairs)}
    exact = exact_match(preds, golds)
    assert filtered_match(preds, golds, EMPTY_FILTER).filtered_accuracy == exact.exact_match_accuracy
    it = filtered_match(preds, golds, FilterList.shipped("it"))
    assert it.filtered_accuracy >= exact.exact_match_accuracy
    assert len(it.mismatches) == round(it.n * (1 - it.filtered_accuracy))
    assert it.as_dict() == filtered_match(preds, golds, FilterList.shipped("it")).as_dict()


def test_bleu_identity():
    refs = ["the cat sat on the mat", "a b c d e", "x"]
    assert corpus_bleu(refs, refs) == pytest.approx(100.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcde"), min_size=1, max_size=8), min_size=1, max_size=5))
def test_bleu_identity_property(corpus):
    assert corpus_bleu(corpus, corpus) == pytest.approx(100.0)


def test_bleu_clipped_case():
    # p1 = 1/3 (clipped); p2 = 0/2, p3 = 0/1, p4 = 0/0 smoothed to 1/3, 1/2, 1/1.
    # Candidate (3) is longer than the reference (2), so no brevity penalty.
    expected = 100 * math.exp((math.log(1 / 3) + math.log(1 / 3) + math.log(1 / 2) + math.log(1)) / 4)
    assert corpus_bleu(["the the the"], ["the cat"]) == pytest.approx(expected, abs=1e-6)


def test_bleu_brevity_penalty():
    # short candidate: all precisions 1, BP = exp(1 - 6/4)
    got = corpus_bleu(["a b c d"], ["a b c d e f"])
    assert got == pytest.approx(100 * math.exp(1 - 6 / 4), abs=1e-9)


def test_bleu_empty_candidate():
    got = corpus_bleu(["", "a b c d"], ["x y", "a b c d"])
    assert math.isfinite(got) and 0 <= got <= 100
    assert corpus_bleu([""], ["x"]) == 0.0


def test_bleu_errors():
    with pytest.raises(LengthMismatch):
        corpus_bleu(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        corpus_bleu([], [])


def test_report_table():
    rep = EvalReport(2, 0.5, 0.75, {"IN:A": 0.5}, [], {"mode": "standard"})
    text = rep.table()
    assert "exact match" in text and "0.5000" in text and "mode" in text


@pytest.fixture(scope="module")
def tiny_model():
    from bootparse.bpe import learn_bpe, word_frequencies
    from bootparse.parser import ParserConfig, build_parser, train_parser
    tr = synthetic.generate(200, seed=5)
    dev = synthetic.generate(20, seed=6, split="dev")
    bpe = learn_bpe(word_frequencies(e.question_tokens for e in tr), 100)
    cfg = ParserConfig(enc_layers=1, dec_layers=1, model_dim=32, heads=2, ffn_dim=64,
                       max_epochs=4, learning_rate=2e-3)
    model, hist = train_parser(build_parser(bpe, tr, cfg), tr, dev, dev_exact_match=True)
    return model, hist, dev


def test_harness_standard_matches_history(tiny_model, tmp_path):
    from bootparse.parser import save_checkpoint
    model, hist, dev = tiny_model
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, {**hist, "train_langs": ["en"]})
    rep = run_harness(str(path), dev, "standard")
    assert rep.exact_match_accuracy == hist["best_dev_exact_match"]
    assert rep.meta["mode"] == "standard"


def test_harness_translate_test_identity(tiny_model):
    model, _, dev = tiny_model
    std = run_harness(model, dev, "standard", train_langs=["en"])
    tt = run_harness(model, dev, "translate_test", backend=IdentityBackend(), train_langs=["en"])
    assert tt.exact_match_accuracy == std.exact_match_accuracy
    assert tt.mismatches == std.mismatches


def test_harness_zero_shot_tags(tiny_model):
    model, _, dev = tiny_model
    xb = synthetic.to_cognate_language(dev)
    rep = run_harness(model, xb, "zero-shot", train_langs=["en"])
    assert rep.meta["mode"] == "zero_shot" and rep.meta["unseen_test_langs"] == ["xb"]
    assert rep.n == len(xb)


def test_harness_translate_test_gold_lookup(tiny_model):
    from bootparse.translate import DictBackend
    model, _, dev = tiny_model
    xb = synthetic.to_cognate_language(dev)
    back = {synthetic.cognate(w): w for w in synthetic.vocabulary()}
    rep = run_harness(model, xb, "translate_test", backend=DictBackend(back), gold=dev,
                      train_langs=["en"])
    std = run_harness(model, dev, "standard", train_langs=["en"])
    assert rep.exact_match_accuracy == std.exact_match_accuracy
