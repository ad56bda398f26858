"""Small generated corpora with known structure, for tests and demos.

The grammar has two intents, five slots and a 50-word vocabulary. Slot
values for ``SL:LOCATION`` and ``SL:NAME_EVENT`` can instead be drawn
from an open vocabulary of generated pseudo-words; the ``train`` and
``dev`` inventories share no consonants, so no dev value ever occurs in
training.
"""
from __future__ import annotations

import random
import re

from .dataset import Corpus, Example
from .mrl import Kind, MrlLabel, MrlNode, MrlTree

SLOT_VALUES = {
    "SL:CATEGORY_EVENT": ["festivals", "concerts", "parades", "markets", "fairs", "plays"],
    "SL:DATE_TIME": ["tonight", "tomorrow", "this weekend", "next week", "tomorrow night", "this evening"],
    "SL:LOCATION": ["paris", "rome", "tokyo", "boston", "denver", "berlin"],
    "SL:NAME_EVENT": ["beyonce", "adele", "coldplay", "shakira", "madonna"],
    "SL:WEATHER_ATTRIBUTE": ["rainy", "sunny", "cold", "windy", "snowy"],
}

_S = {"CAT": "SL:CATEGORY_EVENT", "DATE": "SL:DATE_TIME", "LOC": "SL:LOCATION",
      "NAME": "SL:NAME_EVENT", "WX": "SL:WEATHER_ATTRIBUTE"}

TEMPLATES = [
    ("IN:GET_EVENT", "any {CAT} in {LOC} {DATE}"),
    ("IN:GET_EVENT", "find {CAT} near {LOC}"),
    ("IN:GET_EVENT", "show me {NAME} {CAT} {DATE}"),
    ("IN:GET_EVENT", "are there {CAT} by {NAME} in {LOC}"),
    ("IN:GET_EVENT", "when is the next {NAME} show"),
    ("IN:GET_EVENT", "what {CAT} are on in {LOC} {DATE}"),
    ("IN:GET_WEATHER", "will it be {WX} in {LOC} {DATE}"),
    ("IN:GET_WEATHER", "what is the weather like in {LOC}"),
    ("IN:GET_WEATHER", "is it {WX} near {LOC} {DATE}"),
    ("IN:GET_WEATHER", "weather for {LOC} {DATE}"),
]

FUNCTION_WORDS = {"any", "in", "near", "me", "are", "there", "by", "when", "is", "the",
                  "what", "on", "will", "it", "be", "for", "like", "this", "next"}

_TRAIN_SYLLABLES = [c + v for c in "bdfgkl" for v in "aeiou"]
_DEV_SYLLABLES = [c + v for c in "mnprstvz" for v in "aeiou"]
_OPEN_SLOTS = ("SL:LOCATION", "SL:NAME_EVENT")


def vocabulary() -> set[str]:
    words = set()
    for _, tpl in TEMPLATES:
        words.update(w for w in tpl.split() if not w.startswith("{"))
    for vals in SLOT_VALUES.values():
        for v in vals:
            words.update(v.split())
    return words


def pseudo_word(rng: random.Random, inventory: str) -> str:
    syl = _TRAIN_SYLLABLES if inventory == "train" else _DEV_SYLLABLES
    return "".join(rng.choice(syl) for _ in range(rng.randint(2, 3)))


def _tree(intent, slots) -> MrlTree:
    nodes = tuple(MrlNode(MrlLabel(Kind.SLOT, name), (), tuple(text)) for name, text in slots)
    return MrlTree(MrlNode(MrlLabel(Kind.INTENT, intent), nodes))


def generate(n: int, seed: int = 0, split: str = "train", lang: str = "en",
             open_vocab: str | None = None) -> Corpus:
    """Sample ``n`` question/MRL pairs from the template grammar.

    ``open_vocab`` ("train" or "dev") swaps location and name values for
    fresh pseudo-words from that inventory.
    """
    rng = random.Random(seed)
    out = []
    for k in range(n):
        intent, tpl = TEMPLATES[rng.randrange(len(TEMPLATES))]
        words, slots = [], []
        for piece in tpl.split():
            m = re.fullmatch(r"\{(\w+)\}", piece)
            if not m:
                words.append(piece)
                continue
            name = _S[m.group(1)]
            if open_vocab and name in _OPEN_SLOTS:
                value = [pseudo_word(rng, open_vocab)]
            else:
                value = rng.choice(SLOT_VALUES[name]).split()
            words.extend(value)
            slots.append((name, value))
        out.append(Example(f"{split}-{k}", lang, words, _tree(intent, slots), "synthetic"))
    return Corpus(out, split)


def cognate(word: str) -> str:
    """Deterministic suffix change used to derive a related language."""
    if word in FUNCTION_WORDS:
        return word
    if word[-1] in "aeiou":
        return word[:-1] + "i"
    if word.endswith("s"):
        return word[:-1] + "e"
    return word + "o"


def to_cognate_language(corpus: Corpus, lang: str = "xb") -> Corpus:
    """Rewrite every open-class word (question and leaves) with :func:`cognate`."""
    out = []
    for ex in corpus:
        def conv(node):
            return MrlNode(node.label, tuple(conv(c) for c in node.children),
                           tuple(cognate(w) for w in node.text))
        out.append(Example(f"{ex.id}-{lang}", lang, [cognate(w) for w in ex.question_tokens],
                           MrlTree(conv(ex.mrl.root)), "synthetic", {"source_id": ex.id}))
    return Corpus(out, corpus.split)


def bijective_lexicon(words, suffix: str = "o") -> dict[str, str]:
    """Map each word to a distinct pseudo-translation (reversed word plus suffix)."""
    lex = {w: w[::-1] + suffix for w in sorted(words)}
    assert len(set(lex.values())) == len(lex)
    return lex


def parallel_corpus(n_pairs: int, lexicon: dict[str, str], seed: int = 0,
                    min_len: int = 3, max_len: int = 10):
    """Random monotone word-for-word sentence pairs with their gold alignments."""
    rng = random.Random(seed)
    words = sorted(lexicon)
    pairs, gold = [], []
    for _ in range(n_pairs):
        src = rng.sample(words, rng.randint(min_len, max_len))
        pairs.append((src, [lexicon[w] for w in src]))
        gold.append({(j, j) for j in range(len(src))})
    return pairs, gold
