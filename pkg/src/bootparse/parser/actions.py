"""Oracle action sequences: linearized MRL as GEN / COPY steps over BPE symbols."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import CopyTargetNotFound
from ..mrl import is_structural
from .vocab import EOS


@dataclass(frozen=True)
class Gen:
    symbol: str

    def __str__(self):
        return f"GEN({self.symbol})"


@dataclass(frozen=True)
class Copy:
    index: int

    def __str__(self):
        return f"COPY({self.index})"


def _find(src, sub, start):
    n = len(sub)
    for p in range(start, len(src) - n + 1):
        if src[p:p + n] == sub:
            return p
    return -1


def oracle_actions(example, bpe, copy: bool = True, segment=None) -> list:
    """Gold actions for ``example``.

    Structural MRL tokens are generated. Each leaf's subwords are copied from
    the leftmost matching span of the encoded question after the previous
    leaf's span (falling back to the leftmost span anywhere). With
    ``copy=False`` leaf subwords are generated instead. ``segment`` overrides
    the word segmentation (it must be consistent within the example).
    """
    segment = segment or bpe.encode_word
    src = [s for w in example.question_tokens for s in segment(w)]
    actions = []
    cursor = 0

    def visit(node):
        nonlocal cursor
        actions.append(Gen(bpe.encode_word("[" + node.label.name)[0]))
        if node.text:
            sub = [s for w in node.text for s in segment(w)]
            if not copy:
                actions.extend(Gen(s) for s in sub)
            else:
                p = _find(src, sub, cursor)
                if p < 0:
                    p = _find(src, sub, 0)
                if p < 0:
                    raise CopyTargetNotFound(
                        f"{example.id}: leaf {' '.join(node.text)!r} not in encoded question")
                actions.extend(Copy(p + k) for k in range(len(sub)))
                cursor = p + len(sub)
        for child in node.children:
            visit(child)
        actions.append(Gen(bpe.encode_word("]")[0]))

    visit(example.mrl.root)
    actions.append(Gen(EOS))
    return actions


def action_symbols(actions, src_symbols) -> list[str]:
    """Resolve actions to BPE symbols (EOS and anything after it dropped)."""
    out = []
    for a in actions:
        if isinstance(a, Copy):
            out.append(src_symbols[a.index])
        elif a.symbol == EOS:
            break
        else:
            out.append(a.symbol)
    return out


def detokenize(actions, src_symbols, bpe) -> str:
    """MRL string for an action sequence over the encoded source."""
    return " ".join(bpe.decode(action_symbols(actions, src_symbols)))


def copy_alternatives(actions, src_symbols) -> list[tuple[int, ...]]:
    """For each COPY action, every source position holding the same symbol."""
    out = []
    for a in actions:
        if isinstance(a, Copy):
            sym = src_symbols[a.index]
            out.append(tuple(i for i, s in enumerate(src_symbols) if s == sym))
        else:
            out.append(())
    return out


def is_structural_symbol(sym: str, marker: str) -> bool:
    return sym.endswith(marker) and is_structural(sym[: -len(marker)])
