"""Machine translation backends with a write-through TSV cache."""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import BackendUnavailable, CacheMiss, QuotaExceeded

BATCH_CAP = 50
RETRIES = 3


@dataclass(frozen=True)
class TranslationRequest:
    sentences: tuple[str, ...]
    source_lang: str
    target_lang: str

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise ValueError("translation request has no sentences")
        if self.source_lang == self.target_lang:
            raise ValueError("source and target language must differ")


class Backend:
    """Base class; subclasses implement ``_translate`` for one batch."""

    name = "base"

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def translate(self, sentences, source_lang, target_lang) -> list[str]:
        with self._lock:
            self.calls += 1
        out = self._translate(list(sentences), source_lang, target_lang)
        if len(out) != len(sentences):
            raise BackendUnavailable(f"{self.name}: got {len(out)} translations for {len(sentences)} inputs")
        return out

    def _translate(self, sentences, source_lang, target_lang):
        raise NotImplementedError


class IdentityBackend(Backend):
    name = "identity"

    def _translate(self, sentences, source_lang, target_lang):
        return list(sentences)


class DictBackend(Backend):
    """Word-by-word substitution through a lexicon; unknown words pass through."""

    name = "dict"

    def __init__(self, lexicon: dict[str, str]):
        super().__init__()
        self.lexicon = {k.lower(): v for k, v in lexicon.items()}

    @classmethod
    def from_file(cls, path) -> "DictBackend":
        lex = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                src, tgt = line.split("\t", 1)
                lex[src] = tgt
        return cls(lex)

    def _translate(self, sentences, source_lang, target_lang):
        return [" ".join(self.lexicon.get(w.lower(), w) for w in s.split()) for s in sentences]


class FileBackend(Backend):
    """Serves translations from a prepared cache file and never goes online."""

    name = "file"

    def __init__(self, path):
        super().__init__()
        self.table = TranslationCache(path).entries

    def _translate(self, sentences, source_lang, target_lang):
        out = []
        for s in sentences:
            key = (source_lang, target_lang, s)
            if key not in self.table:
                raise CacheMiss(f"no cached translation for {s!r} ({source_lang}->{target_lang})")
            out.append(self.table[key])
        return out


class HttpBackend(Backend):
    """Generic REST translator.

    POSTs ``{"source_lang", "target_lang", "sentences": [...]}`` and expects
    ``{"translations": [...]}`` back. Endpoint and key default to the
    ``MT_ENDPOINT`` and ``MT_API_KEY`` environment variables.
    """

    name = "http"

    def __init__(self, endpoint=None, api_key=None, timeout=30.0, backoff=0.5, session=None):
        super().__init__()
        self.endpoint = endpoint or os.environ.get("MT_ENDPOINT")
        self.api_key = api_key if api_key is not None else os.environ.get("MT_API_KEY")
        if not self.endpoint:
            raise BackendUnavailable("no MT endpoint configured (set MT_ENDPOINT)")
        self.timeout = timeout
        self.backoff = backoff
        self.session = session or requests.Session()

    def _translate(self, sentences, source_lang, target_lang):
        out = []
        for lo in range(0, len(sentences), BATCH_CAP):
            out.extend(self._post(sentences[lo:lo + BATCH_CAP], source_lang, target_lang))
        return out

    def _post(self, chunk, source_lang, target_lang):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"source_lang": source_lang, "target_lang": target_lang, "sentences": chunk}
        last = None
        for attempt in range(RETRIES + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code == 429:
                raise QuotaExceeded(f"{self.endpoint}: quota exceeded")
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(f"{self.endpoint}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                translations = resp.json()["translations"]
            except (ValueError, KeyError) as exc:
                raise BackendUnavailable(f"{self.endpoint}: malformed response: {exc}") from exc
            if len(translations) != len(chunk):
                raise BackendUnavailable(f"{self.endpoint}: response length mismatch")
            return translations
        raise BackendUnavailable(f"{self.endpoint}: giving up after {RETRIES} retries ({last})")


class TranslationCache:
    """Append-only TSV: source_lang, target_lang, sentence, translation."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.entries: dict[tuple[str, str, str], str] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    parts = line.split("\t")
                    if len(parts) != 4:
                        raise ValueError(f"{self.path}:{lineno}: expected 4 tab-separated fields")
                    src, tgt, sent, trans = parts
                    self.entries[(src, tgt, sent)] = trans

    def get(self, source_lang, target_lang, sentence):
        return self.entries.get((source_lang, target_lang, sentence))

    def put_many(self, source_lang, target_lang, pairs) -> None:
        with self._lock:
            new = [(s, t) for s, t in pairs if (source_lang, target_lang, s) not in self.entries]
            for s, t in new:
                self.entries[(source_lang, target_lang, s)] = t
            if self.path and new:
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    for s, t in new:
                        fh.write(f"{source_lang}\t{target_lang}\t{_clean(s)}\t{_clean(t)}\n")


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ")


def translate_batch(backend: Backend, request: TranslationRequest, cache: TranslationCache | None = None) -> list[str]:
    """Translate every sentence, serving repeats from ``cache`` and writing new results through."""
    src, tgt = request.source_lang, request.target_lang
    results: list[str | None] = [None] * len(request.sentences)
    todo: dict[str, list[int]] = {}
    for k, s in enumerate(request.sentences):
        hit = cache.get(src, tgt, s) if cache else None
        if hit is not None:
            results[k] = hit
        else:
            todo.setdefault(s, []).append(k)
    if todo:
        pending = list(todo)
        fresh = []
        try:
            for lo in range(0, len(pending), BATCH_CAP):
                chunk = pending[lo:lo + BATCH_CAP]
                out = backend.translate(chunk, src, tgt)
                fresh.extend(zip(chunk, out))
        finally:
            if cache is not None:  # keep whatever finished before a failure
                cache.put_many(src, tgt, fresh)
        for s, t in fresh:
            for k in todo[s]:
                results[k] = t
    return results


def make_backend(kind: str, lexicon=None, cache_file=None, endpoint=None) -> Backend:
    if kind == "identity":
        return IdentityBackend()
    if kind == "dict":
        if not lexicon:
            raise ValueError("dict backend needs a lexicon file")
        return DictBackend.from_file(lexicon)
    if kind == "file":
        if not cache_file:
            raise ValueError("file backend needs a cache file")
        return FileBackend(cache_file)
    if kind == "http":
        return HttpBackend(endpoint)
    raise ValueError(f"unknown backend {kind!r}")
