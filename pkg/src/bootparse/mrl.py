"""Bracketed intent/slot meaning representation (TOP style).

The canonical form is a single-space separated token string::

    [IN:GET_EVENT [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]

Intent nodes hold child slots only; slot nodes hold either leaf text or a
nested intent.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator

from .errors import (BadLabel, MixedContent, RootNotIntent, TextUnderIntent,
                     UnbalancedBrackets)

INTENT_RE = re.compile(r"IN:[A-Z_0-9]+")
SLOT_RE = re.compile(r"SL:[A-Z_0-9]+")
CLOSE = "]"


class Kind(enum.Enum):
    INTENT = "IN"
    SLOT = "SL"


@dataclass(frozen=True)
class MrlLabel:
    kind: Kind
    name: str

    def __post_init__(self):
        pattern = INTENT_RE if self.kind is Kind.INTENT else SLOT_RE
        if not pattern.fullmatch(self.name):
            raise BadLabel(f"bad {self.kind.name.lower()} label {self.name!r}")

    @classmethod
    def from_name(cls, name: str) -> "MrlLabel":
        if name.startswith("IN:"):
            return cls(Kind.INTENT, name)
        if name.startswith("SL:"):
            return cls(Kind.SLOT, name)
        raise BadLabel(f"label {name!r} is neither IN:* nor SL:*")

    @property
    def is_intent(self) -> bool:
        return self.kind is Kind.INTENT

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class MrlNode:
    label: MrlLabel
    children: tuple["MrlNode", ...] = ()
    text: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "text", tuple(self.text))
        if self.children and self.text:
            raise MixedContent(f"{self.label} holds both text and children")

    def walk(self) -> Iterator["MrlNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def leaves(self) -> list["MrlNode"]:
        """Nodes carrying text, in left-to-right order."""
        return [n for n in self.walk() if n.text]

    def tokens(self) -> list[str]:
        out = ["[" + self.label.name]
        for child in self.children:
            out.extend(child.tokens())
        out.extend(self.text)
        out.append(CLOSE)
        return out


@dataclass(frozen=True)
class MrlTree:
    root: MrlNode

    def __post_init__(self):
        if not self.root.label.is_intent:
            raise RootNotIntent(f"root label {self.root.label} is not an intent")

    def tokens(self) -> list[str]:
        return self.root.tokens()

    def leaves(self) -> list[MrlNode]:
        return self.root.leaves()

    def shape(self):
        """Tree structure with the leaf text erased."""
        def strip(node):
            return (node.label.name, tuple(strip(c) for c in node.children), bool(node.text))
        return strip(self.root)

    def label_multiset(self) -> list[str]:
        return sorted(n.label.name for n in self.root.walk())

    def __str__(self):
        return serialize_mrl(self)


def mrl_tokens(text: str) -> list[str]:
    """Whitespace tokens with runs of closing brackets (``]]``) split apart."""
    out = []
    for tok in text.split():
        if len(tok) > 1 and set(tok) == {CLOSE}:
            out.extend(CLOSE * len(tok))
        else:
            out.append(tok)
    return out


def canonical(text: str) -> str:
    return " ".join(mrl_tokens(text))


def is_structural(token: str) -> bool:
    return token == CLOSE or token.startswith("[IN:") or token.startswith("[SL:")


@dataclass
class _Open:
    label: MrlLabel
    children: list = field(default_factory=list)
    text: list = field(default_factory=list)


def _build(tokens: list[str], strict: bool) -> MrlTree:
    if not tokens:
        raise UnbalancedBrackets("empty MRL")
    stack: list[_Open] = []
    root = None
    for pos, tok in enumerate(tokens):
        if root is not None:
            raise UnbalancedBrackets(f"token {tok!r} after the root node closed (position {pos})")
        if tok.startswith("["):
            if not (tok.startswith("[IN:") or tok.startswith("[SL:")):
                raise BadLabel(f"unknown label prefix in {tok!r}")
            label = MrlLabel.from_name(tok[1:])
            if not stack and not label.is_intent:
                raise RootNotIntent(f"root label {label} is not an intent")
            stack.append(_Open(label))
        elif tok == CLOSE:
            if not stack:
                raise UnbalancedBrackets(f"unmatched ']' at position {pos}")
            done = stack.pop()
            node = MrlNode(done.label, done.children, done.text)
            if stack:
                stack[-1].children.append(node)
            else:
                root = node
        else:
            if not stack:
                raise UnbalancedBrackets(f"text {tok!r} outside any node")
            top = stack[-1]
            if top.label.is_intent:
                if strict:
                    raise TextUnderIntent(f"text {tok!r} directly under {top.label}")
                continue
            top.text.append(tok)
    if stack:
        raise UnbalancedBrackets(f"{len(stack)} node(s) left open")
    return MrlTree(root)


def parse_mrl(text: str, strict: bool = True) -> MrlTree:
    """Parse a bracketed MRL string.

    With ``strict=False`` text sitting directly under an intent is dropped
    instead of raising :class:`TextUnderIntent`.
    """
    return _build(mrl_tokens(text), strict)


def serialize_mrl(tree: MrlTree) -> str:
    return " ".join(tree.tokens())


class _Dropped:
    def __repr__(self):
        return "DROPPED"

    def __bool__(self):
        return False


DROPPED = _Dropped()
UNSUPPORTED = "IN:UNSUPPORTED"


def adapt_top_annotation(original: str):
    """Convert an original TOP annotation to the adapted form.

    Intent-level text is removed and slot text kept. Returns ``DROPPED``
    for utterances whose root intent is ``IN:UNSUPPORTED``.
    """
    toks = mrl_tokens(original)
    if toks and toks[0] == "[" + UNSUPPORTED:
        return DROPPED
    return _build(toks, strict=False)
