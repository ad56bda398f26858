"""Bootstrap a target-language corpus: template, translate, align, project."""
from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field

from .aligner import AlignerConfig, Alignment, train_aligner, viterbi_align
from .dataset import Corpus, Example, tokenize
from .errors import BootparseError, MrlError, OverlappingSpans, SpanNotFound
from .placeholder import PlaceholderTemplate, make_template, restore_template
from .translate import Backend, TranslationCache, TranslationRequest, translate_batch

log = logging.getLogger(__name__)


class Reason(enum.Enum):
    SPAN_NOT_FOUND = "SpanNotFound"
    TRANSLATION_FAILED = "TranslationFailed"
    UNALIGNED_PLACEHOLDER = "UnalignedPlaceholder"
    OVERLAPPING_PROJECTION = "OverlappingProjection"
    RESTORE_ERROR = "RestoreError"


@dataclass(frozen=True)
class Failure:
    reason: Reason
    detail: str = ""


@dataclass(frozen=True)
class ProjectionOutcome:
    example: Example | None = None
    failure: Failure | None = None

    def __post_init__(self):
        if (self.example is None) == (self.failure is None):
            raise ValueError("exactly one of example/failure must be set")

    @property
    def ok(self) -> bool:
        return self.example is not None


@dataclass
class ProjectionReport:
    attempted: int = 0
    succeeded: int = 0
    failures: Counter = field(default_factory=Counter)

    @property
    def yield_fraction(self) -> float:
        return self.succeeded / self.attempted if self.attempted else 0.0

    def add(self, outcome: ProjectionOutcome) -> None:
        self.attempted += 1
        if outcome.ok:
            self.succeeded += 1
        else:
            self.failures[outcome.failure.reason.value] += 1

    def as_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "succeeded": self.succeeded,
            "failures": dict(sorted(self.failures.items())),
            "yield_fraction": self.yield_fraction,
        }


def _fail(reason, detail=""):
    return ProjectionOutcome(failure=Failure(reason, detail))


def project_example(template: PlaceholderTemplate, translation_tokens, alignment: Alignment,
                    example_id: str = "projected", lang: str = "xx", meta=None) -> ProjectionOutcome:
    """Carry each placeholder over to the translation through the alignment.

    A placeholder's target span is the hull of all target positions linked to
    any of its tagged source tokens. Unlinked placeholders and intersecting
    hulls are reported as failures.
    """
    translation_tokens = tuple(translation_tokens)
    linked: dict[int, list[int]] = {k: [] for k in range(template.k)}
    for j, i in alignment.pairs:
        if not (0 <= j < len(template.token_tags) and 0 <= i < len(translation_tokens)):
            return _fail(Reason.RESTORE_ERROR, f"link {j}-{i} out of range")
        tag = template.token_tags[j]
        if tag is not None:
            linked[tag].append(i)
    hulls = {}
    for k, idx in linked.items():
        if not idx:
            return _fail(Reason.UNALIGNED_PLACEHOLDER, f"x{k}")
        hulls[k] = (min(idx), max(idx))
    ordered = sorted(hulls.items(), key=lambda kv: kv[1])
    for (ka, (_, a_hi)), (kb, (b_lo, _)) in zip(ordered, ordered[1:]):
        if b_lo <= a_hi:
            return _fail(Reason.OVERLAPPING_PROJECTION, f"x{ka} and x{kb}")
    subst = {k: list(translation_tokens[lo:hi + 1]) for k, (lo, hi) in hulls.items()}
    try:
        tree = restore_template(template, subst)
        ex = Example(example_id, lang, translation_tokens, tree, "machine_translated", dict(meta or {}))
    except (BootparseError, MrlError) as exc:
        return _fail(Reason.RESTORE_ERROR, str(exc))
    return ProjectionOutcome(example=ex)


def _norm(tokens):
    return [t.lower() for t in tokens]


def bootstrap_corpus(source: Corpus, backend: Backend, aligner_config: AlignerConfig | None,
                     target_lang: str, source_lang: str | None = None,
                     cache: TranslationCache | None = None):
    """Project every example of ``source`` into ``target_lang``.

    Returns the projected corpus (successes only) and a :class:`ProjectionReport`.
    Backend errors propagate; everything else is counted as a failure.
    """
    aligner_config = aligner_config or AlignerConfig()
    langs = source.langs
    if source_lang is None:
        if len(langs) > 1:
            raise ValueError(f"source corpus mixes languages {sorted(langs)}")
        source_lang = next(iter(langs), "en")
    report = ProjectionReport()
    outcomes: list[ProjectionOutcome | None] = [None] * len(source)
    templates = {}
    for k, ex in enumerate(source):
        try:
            templates[k] = make_template(ex)
        except (SpanNotFound, OverlappingSpans) as exc:
            outcomes[k] = _fail(Reason.SPAN_NOT_FOUND, str(exc))

    todo = sorted(templates)
    translations = {}
    if todo:
        req = TranslationRequest([source[k].question for k in todo], source_lang, target_lang)
        for k, text in zip(todo, translate_batch(backend, req, cache)):
            toks = tokenize(text, target_lang) if text else []
            if toks:
                translations[k] = toks
            else:
                outcomes[k] = _fail(Reason.TRANSLATION_FAILED, "empty translation")

    if translations:
        keys = sorted(translations)
        bitext = [(_norm(source[k].question_tokens), _norm(translations[k])) for k in keys]
        model = train_aligner(bitext, aligner_config)
        for k, (src, tgt) in zip(keys, bitext):
            ex = source[k]
            outcomes[k] = project_example(
                templates[k], translations[k], viterbi_align(model, src, tgt),
                example_id=f"{ex.id}-{target_lang}", lang=target_lang,
                meta={**ex.meta, "source_id": ex.id, "source_lang": source_lang})

    examples = []
    for out in outcomes:
        report.add(out)
        if out.ok:
            examples.append(out.example)
    log.info("projected %d/%d examples into %s", report.succeeded, report.attempted, target_lang)
    return Corpus(examples, source.split), report
