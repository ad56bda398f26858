"""Placeholder templates: slot text in the MRL swapped for symbols x0..xk-1."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptySubstitution, MissingSubstitution, OverlappingSpans, SpanNotFound
from .mrl import MrlNode, MrlTree, serialize_mrl

_PLACEHOLDER = re.compile(r"x(\d+)")


def placeholder(k: int) -> str:
    return f"x{k}"


@dataclass(frozen=True)
class PlaceholderTemplate:
    question_tokens: tuple[str, ...]
    token_tags: tuple[int | None, ...]
    skeleton: MrlTree
    spans: tuple[tuple[int, int], ...]  # half-open [start, end) per placeholder id

    @property
    def k(self) -> int:
        return len(self.spans)

    def source_spans(self) -> dict[int, list[str]]:
        return {i: list(self.question_tokens[s:e]) for i, (s, e) in enumerate(self.spans)}

    def debug_string(self) -> str:
        """Question rendered as ``token|x_k`` the way it is shown to annotators."""
        parts = []
        for tok, tag in zip(self.question_tokens, self.token_tags):
            parts.append(tok if tag is None else f"{tok}|x{tag}")
        return " ".join(parts) + "\n" + serialize_mrl(self.skeleton)


def _find(tokens, needle, start):
    n = len(needle)
    for i in range(start, len(tokens) - n + 1):
        if tuple(tokens[i:i + n]) == tuple(needle):
            return i
    return -1


def make_template(example) -> PlaceholderTemplate:
    """Locate each leaf's text in the question, left to right, and tag it.

    Each leaf is matched at its leftmost occurrence after the previous
    leaf's span.
    """
    tokens = tuple(example.question_tokens)
    spans = []
    cursor = 0

    def rewrite(node: MrlNode) -> MrlNode:
        nonlocal cursor
        if node.text:
            at = _find(tokens, node.text, cursor)
            if at < 0:
                if _find(tokens, node.text, 0) >= 0:
                    raise OverlappingSpans(
                        f"{example.id}: leaf {' '.join(node.text)!r} only occurs before "
                        f"or across an earlier span")
                raise SpanNotFound(f"{example.id}: leaf {' '.join(node.text)!r} not in question")
            spans.append((at, at + len(node.text)))
            cursor = at + len(node.text)
            return MrlNode(node.label, (), (placeholder(len(spans) - 1),))
        return MrlNode(node.label, tuple(rewrite(c) for c in node.children), ())

    skeleton = MrlTree(rewrite(example.mrl.root))
    tags: list[int | None] = [None] * len(tokens)
    for k, (s, e) in enumerate(spans):
        for i in range(s, e):
            tags[i] = k
    return PlaceholderTemplate(tokens, tuple(tags), skeleton, tuple(spans))


def restore_template(template: PlaceholderTemplate, substitution) -> MrlTree:
    """Replace each placeholder leaf with its substituted token list."""
    for k in range(template.k):
        if k not in substitution:
            raise MissingSubstitution(f"no substitution for x{k}")
        if len(substitution[k]) == 0:
            raise EmptySubstitution(f"empty substitution for x{k}")

    def fill(node: MrlNode) -> MrlNode:
        if node.text:
            k = int(_PLACEHOLDER.fullmatch(node.text[0]).group(1))
            return MrlNode(node.label, (), tuple(substitution[k]))
        return MrlNode(node.label, tuple(fill(c) for c in node.children), ())

    return MrlTree(fill(template.skeleton.root))
