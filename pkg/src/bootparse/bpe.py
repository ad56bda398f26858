"""Byte-pair encoding over characters, shared across languages.

Words are split into characters with the end-of-word marker glued to the
last one (``low`` -> ``l o w</w>``). MRL structural tokens (``[IN:...``,
``[SL:...``, ``]``) are never split; each becomes one whole-word symbol.
"""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import EmptyCorpus
from .mrl import is_structural

EOW = "</w>"


def _split(word: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + EOW,)


def _merge_word(symbols, pair, joined):
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(joined)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    marker: str = EOW
    merge_counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge in BPE model")
        self.ranks = {m: r for r, m in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    @property
    def vocabulary(self) -> set[str]:
        return {a + b for a, b in self.merges} | {s for m in self.merges for s in m}

    def encode_word(self, word: str) -> tuple[str, ...]:
        if is_structural(word):
            return (word + self.marker,)
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        symbols = _split(word)
        while len(symbols) > 1:
            pairs = {(a, b) for a, b in zip(symbols, symbols[1:])}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            symbols = _merge_word(symbols, best, best[0] + best[1])
        self._cache[word] = symbols
        return symbols

    def sample_word(self, word: str, dropout: float, rng) -> tuple[str, ...]:
        """Segmentation with each applicable merge skipped with prob ``dropout``."""
        if is_structural(word):
            return (word + self.marker,)
        symbols = _split(word)
        while len(symbols) > 1:
            pairs = {(a, b) for a, b in zip(symbols, symbols[1:]) if (a, b) in self.ranks}
            pairs = [p for p in sorted(pairs, key=self.ranks.get) if rng.random() >= dropout]
            if not pairs:
                break
            symbols = _merge_word(symbols, pairs[0], pairs[0][0] + pairs[0][1])
        return symbols

    def encode(self, tokens) -> list[str]:
        out = []
        for tok in tokens:
            out.extend(self.encode_word(tok))
        return out

    def decode(self, symbols) -> list[str]:
        tokens, cur = [], ""
        for sym in symbols:
            if sym.endswith(self.marker):
                tokens.append(cur + sym[:-len(self.marker)])
                cur = ""
            else:
                cur += sym
        if cur:
            tokens.append(cur)
        return tokens

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#bpe end_of_word={self.marker}\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "BpeModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#bpe end_of_word="):
                raise ValueError(f"{path}: not a BPE model file")
            marker = header.split("=", 1)[1]
            merges = [tuple(line.rstrip("\n").split(" ")) for line in fh if line.strip()]
        return cls(merges, marker)


def word_frequencies(sentences) -> Counter:
    """Count words over token lists, skipping reserved MRL symbols."""
    freqs = Counter()
    for toks in sentences:
        freqs.update(t for t in toks if not is_structural(t))
    return freqs


def learn_bpe(freqs: dict[str, int], num_merges: int) -> BpeModel:
    """Greedy most-frequent-pair merging.

    Stops after ``num_merges`` merges or when no adjacent pair occurs twice.
    Ties go to the lexicographically smallest pair.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    items = sorted((w, c) for w, c in freqs.items() if w and c > 0 and not is_structural(w))
    if not items:
        raise EmptyCorpus("BPE needs a non-empty word frequency table")
    words = [_split(w) for w, _ in items]
    counts = [c for _, c in items]

    stats: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for k, sym in enumerate(words):
        for p in zip(sym, sym[1:]):
            stats[p] += counts[k]
            where[p].add(k)
    heap = [(-c, p) for p, c in stats.items()]
    heapq.heapify(heap)

    merges, merge_counts = [], []
    while len(merges) < num_merges and heap:
        neg, pair = heapq.heappop(heap)
        if stats.get(pair, 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        joined = pair[0] + pair[1]
        merges.append(pair)
        merge_counts.append(-neg)
        touched = set()
        for k in sorted(where.pop(pair, ())):
            old = words[k]
            new = _merge_word(old, pair, joined)
            if new == old:
                continue
            for p in zip(old, old[1:]):
                stats[p] -= counts[k]
                touched.add(p)
            for p in zip(new, new[1:]):
                stats[p] += counts[k]
                where[p].add(k)
                touched.add(p)
            words[k] = new
        stats.pop(pair, None)
        for p in touched:
            c = stats.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                stats.pop(p, None)
    return BpeModel(merges, EOW, merge_counts)
