import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootparse.bpe import EOW, BpeModel, learn_bpe, word_frequencies
from bootparse.errors import EmptyCorpus


def naive_bpe(freqs, num_merges):
    """Recount every pair from scratch before each merge."""
    words = {w: list(w[:-1]) + [w[-1] + EOW] for w in freqs}
    merges = []
    for _ in range(num_merges):
        stats = Counter()
        for w, sym in words.items():
            for p in zip(sym, sym[1:]):
                stats[p] += freqs[w]
        if not stats:
            break
        best = min(stats, key=lambda p: (-stats[p], p))
        if stats[best] < 2:
            break
        merges.append(best)
        for w, sym in words.items():
            out, i = [], 0
            while i < len(sym):
                if i + 1 < len(sym) and (sym[i], sym[i + 1]) == best:
                    out.append(sym[i] + sym[i + 1])
                    i += 2
                else:
                    out.append(sym[i])
                    i += 1
            words[w] = out
    return merges


LOW_LOWER = [("l", "o"), ("lo", "w</w>"), ("e", "r</w>"), ("lo", "w"), ("low", "er</w>")]


def test_low_lower_hand_oracle():
    model = learn_bpe({"low": 3, "lower": 2}, 10)
    assert model.merges[0] == ("l", "o") and model.merge_counts[0] == 5
    assert model.merges == LOW_LOWER
    assert naive_bpe({"low": 3, "lower": 2}, 10) == LOW_LOWER


def test_zero_merges():
    model = learn_bpe({"low": 3}, 0)
    assert model.merges == []
    assert model.encode(["low"]) == ["l", "o", "w</w>"]


def test_single_word():
    assert learn_bpe({"aaaa": 1}, 1).merges == [("a", "a")]


def test_manual_merge_application():
    model = BpeModel([("l", "o"), ("lo", "w")])
    # "lo" + "w</w>" is not the ("lo", "w") pair: the marker stays on the final char
    assert model.encode(["low"]) == ["lo", "w</w>"]
    assert model.encode(["lowly"]) == ["low", "l", "y</w>"]


def test_empty_inputs():
    model = learn_bpe({"abc": 2}, 5)
    assert model.encode([]) == [] and model.decode([]) == []
    with pytest.raises(EmptyCorpus):
        learn_bpe({}, 5)
    with pytest.raises(ValueError):
        learn_bpe({"a": 1}, -1)


def test_reserved_symbols_kept_whole():
    model = learn_bpe(word_frequencies([["[IN:GET_EVENT", "festivals", "]"]] * 3), 50)
    enc = model.encode(["[IN:GET_EVENT", "[SL:DATE_TIME", "festivals", "]"])
    assert enc[:2] == ["[IN:GET_EVENT</w>", "[SL:DATE_TIME</w>"] and enc[-1] == "]</w>"
    assert all("IN:" not in a + b for a, b in model.merges)


def _corpus(seed, n_words=300):
    rng = random.Random(seed)
    alpha = "abcdeèfgh"
    return {"".join(rng.choice(alpha) for _ in range(rng.randint(1, 8))): rng.randint(1, 20)
            for _ in range(n_words)}


@pytest.mark.parametrize("seed", range(3))
def test_matches_naive_learner(seed):
    freqs = _corpus(seed)
    assert learn_bpe(freqs, 60).merges == naive_bpe(freqs, 60)


def _symbol_count(model, freqs):
    return sum(c * len(model.encode_word(w)) for w, c in freqs.items())


def test_symbol_count_monotone():
    freqs = _corpus(9, 500)
    full = learn_bpe(freqs, 100)
    totals = [_symbol_count(BpeModel(full.merges[:k]), freqs) for k in range(len(full.merges) + 1)]
    assert all(b < a for a, b in zip(totals, totals[1:]))
    # overlapping runs ("aaa") make a merge's pair count an upper bound on the drop
    assert all(0 < a - b <= c for a, b, c in zip(totals, totals[1:], full.merge_counts))


def test_deterministic():
    freqs = _corpus(4)
    assert learn_bpe(freqs, 80).merges == learn_bpe(dict(reversed(list(freqs.items()))), 80).merges


def test_roundtrip_festivals():
    model = learn_bpe(_corpus(1), 40)
    toks = ["Any", "festivals", "this", "weekend"]
    assert model.decode(model.encode(toks)) == toks


def test_save_load(tmp_path):
    model = learn_bpe(_corpus(2), 40)
    model.save(tmp_path / "bpe.txt")
    assert (tmp_path / "bpe.txt").read_text(encoding="utf-8").startswith("#bpe end_of_word=</w>\n")
    assert BpeModel.load(tmp_path / "bpe.txt").merges == model.merges


TOKENS = st.text(st.characters(blacklist_categories=("Z", "Cc", "Cs")), min_size=1, max_size=10).filter(
    lambda t: EOW not in t and not t.split() == [] and t == t.strip() and len(t.split()) == 1)
MODEL = learn_bpe(_corpus(5, 800), 150)


@settings(max_examples=1000, deadline=None)
@given(st.lists(TOKENS, max_size=8))
def test_roundtrip_random(tokens):
    assert MODEL.decode(MODEL.encode(tokens)) == tokens
