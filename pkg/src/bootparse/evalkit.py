"""Exact match, article-filtered match, corpus BLEU and the evaluation harness."""
from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources

from .errors import IdMismatch, LengthMismatch
from .mrl import is_structural, mrl_tokens


@dataclass(frozen=True)
class FilterList:
    lang: str
    tokens: frozenset

    def __post_init__(self):
        object.__setattr__(self, "tokens", frozenset(t.lower() for t in self.tokens))

    @property
    def elided(self) -> tuple[str, ...]:
        """Entries ending in an apostrophe also strip as glued prefixes (d'artificio)."""
        return tuple(sorted((t for t in self.tokens if t.endswith("'")), key=len, reverse=True))

    @classmethod
    def from_file(cls, path, lang: str = "") -> "FilterList":
        with open(path, encoding="utf-8") as fh:
            return cls(lang, frozenset(line.strip() for line in fh if line.strip()))

    @classmethod
    def shipped(cls, lang: str) -> "FilterList":
        text = resources.files("bootparse").joinpath("data").joinpath(f"{lang}.txt").read_text("utf-8")
        return cls(lang, frozenset(t.strip() for t in text.splitlines() if t.strip()))

    def apply(self, tokens) -> list[str]:
        """Drop filter tokens from leaf positions; brackets and labels pass through."""
        out = []
        for tok in tokens:
            if is_structural(tok):
                out.append(tok)
                continue
            low = tok.lower()
            if low in self.tokens:
                continue
            for pre in self.elided:
                if low.startswith(pre) and len(low) > len(pre):
                    tok = tok[len(pre):]
                    break
            out.append(tok)
        return out


EMPTY_FILTER = FilterList("", frozenset())


@dataclass
class EvalReport:
    n: int
    exact_match_accuracy: float
    filtered_accuracy: float | None = None
    per_intent: dict = field(default_factory=dict)
    mismatches: list = field(default_factory=list)  # (id, gold, prediction) under the headline metric
    meta: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.exact_match_accuracy if self.filtered_accuracy is None else self.filtered_accuracy

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "exact_match_accuracy": self.exact_match_accuracy,
            "filtered_accuracy": self.filtered_accuracy,
            "per_intent": dict(sorted(self.per_intent.items())),
            "mismatches": [list(m) for m in self.mismatches],
            **self.meta,
        }

    def table(self) -> str:
        rows = [("examples", str(self.n)), ("exact match", f"{self.exact_match_accuracy:.4f}")]
        if self.filtered_accuracy is not None:
            rows.append(("filtered match", f"{self.filtered_accuracy:.4f}"))
        for k in sorted(self.meta):
            if not isinstance(self.meta[k], (dict, list)):
                rows.append((k, str(self.meta[k])))
        for intent, acc in sorted(self.per_intent.items()):
            rows.append((f"  {intent}", f"{acc:.4f}"))
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b}" for a, b in rows)


def _check_ids(predictions, golds):
    if set(predictions) != set(golds):
        extra = sorted(set(predictions) - set(golds))[:3]
        missing = sorted(set(golds) - set(predictions))[:3]
        raise IdMismatch(f"prediction/gold ids differ (extra {extra}, missing {missing})")


def _intent(gold_tokens) -> str:
    return gold_tokens[0][1:] if gold_tokens and gold_tokens[0].startswith("[IN:") else "?"


def _score(predictions, golds, flt: FilterList | None):
    _check_ids(predictions, golds)
    hits, by_intent, bad = 0, defaultdict(lambda: [0, 0]), []
    for i in sorted(golds):
        g, p = mrl_tokens(golds[i]), mrl_tokens(predictions[i])
        ok = (flt.apply(g) == flt.apply(p)) if flt is not None else g == p
        hits += ok
        slot = by_intent[_intent(g)]
        slot[0] += ok
        slot[1] += 1
        if not ok:
            bad.append((i, " ".join(g), " ".join(p)))
    n = len(golds)
    return (hits / n if n else 0.0), {k: a / b for k, (a, b) in by_intent.items()}, bad


def exact_match(predictions: dict, golds: dict) -> EvalReport:
    acc, per, bad = _score(predictions, golds, None)
    return EvalReport(len(golds), acc, None, per, bad)


def filtered_match(predictions: dict, golds: dict, flt: FilterList) -> EvalReport:
    exact, _, _ = _score(predictions, golds, None)
    acc, per, bad = _score(predictions, golds, flt)
    return EvalReport(len(golds), exact, acc, per, bad, {"filter_lang": flt.lang})


# -- BLEU ---------------------------------------------------------------------

def _ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def corpus_bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus BLEU (0-100) with one reference per candidate.

    Clipped n-gram precisions are pooled over the corpus. When some
    precision is zero, orders n >= 2 get add-one smoothing on numerator and
    denominator. Inputs are token lists or whitespace-separated strings.
    """
    if len(candidates) != len(references):
        raise LengthMismatch(f"{len(candidates)} candidates vs {len(references)} references")
    if not references:
        raise ValueError("corpus_bleu needs at least one reference")
    cands = [c.split() if isinstance(c, str) else list(c) for c in candidates]
    refs = [r.split() if isinstance(r, str) else list(r) for r in references]
    num, den = [0] * max_n, [0] * max_n
    c_len = sum(map(len, cands))
    r_len = sum(map(len, refs))
    for c, r in zip(cands, refs):
        for n in range(1, max_n + 1):
            cn, rn = _ngrams(c, n), _ngrams(r, n)
            num[n - 1] += sum(min(v, rn[g]) for g, v in cn.items())
            den[n - 1] += max(len(c) - n + 1, 0)
    if c_len == 0 or num[0] == 0:
        return 0.0
    if any(num[k] == 0 for k in range(max_n)):
        for k in range(1, max_n):
            num[k] += 1
            den[k] += 1
    log_p = sum(math.log(num[k] / den[k]) for k in range(max_n)) / max_n
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100.0 * bp * math.exp(log_p)


# -- harness ------------------------------------------------------------------

class Mode(enum.Enum):
    STANDARD = "standard"
    ZERO_SHOT = "zero_shot"
    TRANSLATE_TEST = "translate_test"

    @classmethod
    def parse(cls, s: str) -> "Mode":
        return cls(s.replace("-", "_"))


def run_harness(model, test, mode="standard", backend=None, gold=None, flt: FilterList | None = None,
                train_langs=None, beam_size: int | None = None, cache=None) -> EvalReport:
    """Decode ``test`` with ``model`` (a ParserModel or checkpoint path) and score it.

    translate_test: questions are translated into the model's training
    language by ``backend`` and scored against ``gold`` (the training-language
    corpus, matched through ``meta['source_id']`` when present).
    """
    from .dataset import tokenize
    from .parser import decode_beam, load_checkpoint

    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    history = {}
    if not hasattr(model, "bpe"):
        model, history = load_checkpoint(model)
    train_langs = sorted(train_langs or history.get("train_langs", []))
    test_langs = sorted(test.langs)
    meta = {"mode": mode.value, "test_langs": test_langs, "train_langs": train_langs}

    if mode is Mode.TRANSLATE_TEST:
        from .translate import TranslationRequest, translate_batch
        if backend is None:
            raise ValueError("translate_test needs a translation backend")
        target = train_langs[0] if train_langs else "en"
        src_lang = test_langs[0] if len(test_langs) == 1 else "xx"
        gold_by_id = (gold or test).by_id()
        texts = translate_batch(backend, TranslationRequest([ex.question for ex in test], src_lang, target),
                                cache) if src_lang != target else [ex.question for ex in test]
        preds, golds = {}, {}
        for ex, text in zip(test, texts):
            gid = ex.meta.get("source_id", ex.id) if gold is not None else ex.id
            if gid not in gold_by_id:
                raise IdMismatch(f"no gold example {gid!r} for {ex.id}")
            toks = tokenize(text, target) or ["?"]
            preds[ex.id] = decode_beam(model, toks, beam_size).mrl
            golds[ex.id] = str(gold_by_id[gid].mrl)
        meta["translated_to"] = target
    else:
        preds = {ex.id: decode_beam(model, ex.question_tokens, beam_size).mrl for ex in test}
        golds = {ex.id: str(ex.mrl) for ex in test}
        if mode is Mode.ZERO_SHOT:
            meta["unseen_test_langs"] = [l for l in test_langs if l not in train_langs]
    rep = filtered_match(preds, golds, flt) if flt is not None else exact_match(preds, golds)
    rep.meta.update(meta)
    return rep
