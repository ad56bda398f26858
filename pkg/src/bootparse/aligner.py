"""fast_align style word aligner: IBM Model 2 with a log-linear diagonal prior.

For target position i (1..m) and source position j (1..n)::

    p(a_i = 0) = p0
    p(a_i = j) = (1 - p0) * exp(lam * h(i, j, m, n)) / Z,   h = -|i/m - j/n|

Translation probabilities t(f|e) are estimated by EM with add-alpha
smoothing. The NULL word emits every target word with the uniform
probability 1/|V_f|. The tension ``lam`` is fixed rather than learned.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._align_py import _prior
from .errors import EmptyCorpus, EmptySentence

if os.environ.get("BOOTPARSE_PURE"):
    from . import _align_py as _kernels
    BACKEND = "python"
else:
    try:
        from . import _align_ext as _kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _align_py as _kernels
        BACKEND = "python"

FLOOR = 1e-9
CHUNK = 256  # sentences per E-step work unit; fixed so sums do not depend on worker count


@dataclass
class AlignerConfig:
    iterations: int = 5
    lam: float = 4.0
    p_null: float = 0.08
    smoothing_alpha: float = 0.01
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if not 0.0 <= self.p_null < 1.0:
            raise ValueError("p_null must lie in [0, 1)")
        if self.smoothing_alpha < 0:
            raise ValueError("smoothing_alpha must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "AlignerConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in types:
                raise KeyError(f"unknown aligner option {k!r}")
            out[k] = int(v) if types[k] in ("int", int) else float(v)
        return cls(**out)


@dataclass(frozen=True)
class Alignment:
    """(source index, target index) links, 0-based; NULL links omitted."""
    pairs: frozenset

    def __iter__(self):
        return iter(sorted(self.pairs, key=lambda p: (p[1], p[0])))

    def __len__(self):
        return len(self.pairs)

    def pharaoh(self) -> str:
        return " ".join(f"{j}-{i}" for j, i in sorted(self.pairs))

    @classmethod
    def from_pharaoh(cls, line: str) -> "Alignment":
        pairs = set()
        for item in line.split():
            j, i = item.split("-")
            pairs.add((int(j), int(i)))
        return cls(frozenset(pairs))


class AlignmentModel:
    def __init__(self, config, src_vocab, tgt_vocab, ttable, implicit=None):
        self.config = config
        self.src_vocab = list(src_vocab)
        self.tgt_vocab = list(tgt_vocab)
        self._tgt_set = set(self.tgt_vocab)
        self.ttable = dict(ttable)          # (e, f) -> t(f|e)
        self.implicit = dict(implicit or {})  # e -> smoothed mass of each non-cooccurring f
        self.loglik_history: list[float] = []
        self.counts: dict | None = None

    @property
    def null_t(self) -> float:
        return 1.0 / max(len(self.tgt_vocab), 1)

    def t(self, e: str, f: str) -> float:
        p = self.ttable.get((e, f))
        if p is not None:
            return p if p > 0.0 else FLOOR
        imp = self.implicit.get(e, 0.0)
        if imp > 0.0 and f in self._tgt_set:
            return imp
        return FLOOR

    def row_sum(self, e: str) -> float:
        stored = [p for (src, _), p in self.ttable.items() if src == e]
        n_implicit = len(self.tgt_vocab) - len(stored)
        return math.fsum(stored) + n_implicit * self.implicit.get(e, 0.0)

    def dump_ttable(self) -> str:
        lines = [f"{e} {f} {p:.10g}" for (e, f), p in sorted(self.ttable.items())]
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        payload = {
            "config": asdict(self.config),
            "src_vocab": self.src_vocab,
            "tgt_vocab": self.tgt_vocab,
            "ttable": [[e, f, p] for (e, f), p in sorted(self.ttable.items())],
            "implicit": dict(sorted(self.implicit.items())),
            "loglik_history": self.loglik_history,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "AlignmentModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        model = cls(AlignerConfig(**d["config"]), d["src_vocab"], d["tgt_vocab"],
                    {(e, f): p for e, f, p in d["ttable"]}, d["implicit"])
        model.loglik_history = d.get("loglik_history", [])
        return model


class _Encoded:
    """Integer view of a bitext with one pair id per (target pos, source pos) cell."""

    def __init__(self, corpus):
        self.src_ids: dict[str, int] = {}
        self.tgt_ids: dict[str, int] = {}
        pair_ids: dict[tuple[int, int], int] = {}
        tgt_len, src_len, pair_off, flat = [], [], [], []
        off = 0
        for src, tgt in corpus:
            e = [self.src_ids.setdefault(w, len(self.src_ids)) for w in src]
            f = [self.tgt_ids.setdefault(w, len(self.tgt_ids)) for w in tgt]
            for fi in f:
                for ej in e:
                    flat.append(pair_ids.setdefault((ej, fi), len(pair_ids)))
            tgt_len.append(len(f))
            src_len.append(len(e))
            pair_off.append(off)
            off += len(e) * len(f)
        self.tgt_len = np.asarray(tgt_len, dtype=np.int32)
        self.src_len = np.asarray(src_len, dtype=np.int32)
        self.pair_off = np.asarray(pair_off, dtype=np.int64)
        self.pair_idx = np.asarray(flat, dtype=np.int32)
        self.pairs = np.zeros((len(pair_ids), 2), dtype=np.int64)
        for (ej, fi), p in pair_ids.items():
            self.pairs[p] = (ej, fi)
        self.n_sent = len(tgt_len)


def _check(corpus):
    corpus = [(list(s), list(t)) for s, t in corpus]
    if not corpus:
        raise EmptyCorpus("aligner corpus is empty")
    for k, (s, t) in enumerate(corpus):
        if not s or not t:
            raise EmptySentence(f"sentence pair {k} has an empty side")
    return corpus


def _estep(enc: _Encoded, t: np.ndarray, cfg: AlignerConfig, null_t: float):
    """Expected link counts per pair id and the corpus log-likelihood."""
    post = np.empty(len(enc.pair_idx), dtype=np.float64)
    bounds = [(lo, min(lo + CHUNK, enc.n_sent)) for lo in range(0, enc.n_sent, CHUNK)]

    def run(b):
        return _kernels.estep(enc.tgt_len, enc.src_len, enc.pair_off, enc.pair_idx, t,
                              cfg.p_null, cfg.lam, null_t, post, b[0], b[1])

    if cfg.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            lls = list(pool.map(run, bounds))
    else:
        lls = [run(b) for b in bounds]
    counts = np.zeros(len(enc.pairs), dtype=np.float64)
    for lo, hi in bounds:  # merge in fixed sentence order
        a, b = int(enc.pair_off[lo]), int(enc.pair_off[hi]) if hi < enc.n_sent else len(post)
        counts += np.bincount(enc.pair_idx[a:b], weights=post[a:b], minlength=len(counts))
    return counts, math.fsum(lls)


def _mstep(enc: _Encoded, counts: np.ndarray, alpha: float):
    n_f = len(enc.tgt_ids)
    e_tot = np.bincount(enc.pairs[:, 0], weights=counts, minlength=len(enc.src_ids))
    denom = e_tot + alpha * n_f
    t = (counts + alpha) / denom[enc.pairs[:, 0]]
    implicit = alpha / denom if alpha > 0 else np.zeros_like(denom)
    return t, implicit


def _init_t(enc: _Encoded) -> np.ndarray:
    per_e = np.bincount(enc.pairs[:, 0], minlength=len(enc.src_ids))
    return 1.0 / per_e[enc.pairs[:, 0]]


def _to_model(enc, cfg, t, implicit):
    src_vocab = sorted(enc.src_ids, key=enc.src_ids.get)
    tgt_vocab = sorted(enc.tgt_ids, key=enc.tgt_ids.get)
    ttable = {(src_vocab[e], tgt_vocab[f]): float(p) for (e, f), p in zip(enc.pairs, t)}
    imp = {src_vocab[e]: float(v) for e, v in enumerate(implicit)}
    return AlignmentModel(cfg, src_vocab, tgt_vocab, ttable, imp)


def train_aligner(corpus, config: AlignerConfig | None = None) -> AlignmentModel:
    """Run EM over (source tokens, target tokens) pairs.

    The returned model carries ``loglik_history`` (log-likelihood before each
    iteration plus the final one) and ``counts``, the expected counts from the
    last E-step.
    """
    cfg = config or AlignerConfig()
    corpus = _check(corpus)
    enc = _Encoded(corpus)
    null_t = 1.0 / len(enc.tgt_ids)
    t = _init_t(enc)
    implicit = np.zeros(len(enc.src_ids))
    history = []
    counts = None
    for _ in range(cfg.iterations):
        counts, ll = _estep(enc, t, cfg, null_t)
        history.append(ll)
        t, implicit = _mstep(enc, counts, cfg.smoothing_alpha)
    history.append(_estep(enc, t, cfg, null_t)[1])
    model = _to_model(enc, cfg, t, implicit)
    model.loglik_history = history
    src_vocab, tgt_vocab = model.src_vocab, model.tgt_vocab
    model.counts = {(src_vocab[e], tgt_vocab[f]): float(c) for (e, f), c in zip(enc.pairs, counts)}
    return model


def _tmatrix(model: AlignmentModel, src, tgt) -> np.ndarray:
    return np.array([[model.t(e, f) for e in src] for f in tgt], dtype=np.float64).ravel()


def viterbi_align(model: AlignmentModel, src, tgt) -> Alignment:
    """Most probable source word (or NULL) for every target word."""
    if not src or not tgt:
        raise EmptySentence("cannot align an empty sentence")
    cfg = model.config
    best = _kernels.viterbi(len(tgt), len(src), _tmatrix(model, src, tgt),
                            cfg.p_null, cfg.lam, model.null_t)
    return Alignment(frozenset((int(j) - 1, i) for i, j in enumerate(best) if j > 0))


def corpus_loglik(model: AlignmentModel, corpus) -> float:
    corpus = _check(corpus)
    cfg = model.config
    total = []
    for src, tgt in corpus:
        m, n = len(tgt), len(src)
        tv = _tmatrix(model, src, tgt).reshape(m, n)
        prior = _prior(m, n, cfg.lam)
        tot = cfg.p_null * model.null_t + (1.0 - cfg.p_null) * (prior * tv).sum(axis=1)
        total.append(float(np.log(tot).sum()))
    return math.fsum(total)


def diagonal_feature(i: int, j: int, m: int, n: int) -> float:
    """h(i, j, m, n) for 1-based positions."""
    return -abs(i / m - j / n)


def alignment_f1(predicted, gold) -> float:
    """Link-level F1 between two collections of alignments."""
    tp = n_pred = n_gold = 0
    for p, g in zip(predicted, gold):
        p, g = set(p.pairs if isinstance(p, Alignment) else p), set(g.pairs if isinstance(g, Alignment) else g)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    if tp == 0:
        return 0.0
    prec, rec = tp / n_pred, tp / n_gold
    return 2 * prec * rec / (prec + rec)
