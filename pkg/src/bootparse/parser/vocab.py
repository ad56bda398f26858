from __future__ import annotations

PAD, UNK, MASK, BOS, EOS = "<pad>", "<unk>", "<mask>", "<s>", "</s>"
UNK_END = "<unk></w>"  # unknown word-final subword; keeps word boundaries visible


class Vocab:
    """Symbol <-> id table. The first entries are fixed special symbols."""

    def __init__(self, specials, symbols=()):
        self.itos: list[str] = []
        self.stoi: dict[str, int] = {}
        for s in list(specials) + list(symbols):
            self.add(s)
        self.n_special = len(specials)

    def add(self, sym: str) -> int:
        if sym not in self.stoi:
            self.stoi[sym] = len(self.itos)
            self.itos.append(sym)
        return self.stoi[sym]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, sym):
        return sym in self.stoi

    def __getitem__(self, sym) -> int:
        return self.stoi.get(sym, self.stoi.get(UNK, 0))

    def lookup(self, symbols) -> list[int]:
        return [self[s] for s in symbols]
