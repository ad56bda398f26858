"""Greedy and length-normalized beam decoding over GEN/COPY actions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import EmptySentence
from .actions import detokenize


@dataclass
class DecodeResult:
    actions: list          # Gen / Copy objects, EOS included when reached
    action_ids: list[int]
    mrl: str
    score: float           # summed log-probability
    truncated: bool = False  # no EOS within max_decode_len

    @property
    def normalized_score(self) -> float:
        return self.score / max(len(self.action_ids), 1)


class _Session:
    """Encoded source plus a batched next-step scorer for a set of prefixes."""

    def __init__(self, model, question_tokens):
        if not question_tokens:
            raise EmptySentence("cannot decode an empty question")
        self.model = model
        self.src_symbols = model.bpe.encode(question_tokens)
        src = model.source_ids(self.src_symbols)
        self.pad = torch.zeros_like(src, dtype=torch.bool)
        with torch.no_grad():
            self.memory = model.encode(src, self.pad)

    def step(self, prefixes) -> np.ndarray:
        model = self.model
        ids, copy = zip(*(model.decoder_inputs(p) for p in prefixes))
        b = len(prefixes)
        with torch.no_grad():
            mem = self.memory.expand(b, -1, -1)
            pad = self.pad.expand(b, -1)
            copy = torch.tensor(copy)
            h = model.decoder_hidden(mem, pad, torch.tensor(ids), copy)
            scores = model.action_scores(h[:, -1:], mem, pad, copy[:, -1:])
            logp = torch.log_softmax(scores, dim=-1)[:, 0]
        return logp.double().numpy()

    def result(self, ids, score, truncated):
        acts = self.model.decode_actions(ids)
        return DecodeResult(acts, list(ids), detokenize(acts, self.src_symbols, self.model.bpe),
                            float(score), truncated)


def greedy_decode(model, question_tokens) -> DecodeResult:
    """Step-wise argmax decoding."""
    was_training = model.training
    model.eval()
    try:
        s = _Session(model, question_tokens)
        prefix, score = [], 0.0
        for _ in range(model.config.max_decode_len):
            logp = s.step([prefix])[0]
            a = int(np.argmax(logp))
            prefix.append(a)
            score += logp[a]
            if a == model.eos:
                return s.result(prefix, score, False)
        return s.result(prefix, score, True)
    finally:
        model.train(was_training)


def decode_beam(model, question_tokens, beam_size: int | None = None) -> DecodeResult:
    """Beam search ranked by log-prob / length.

    Each step keeps the ``beam_size`` best expansions of all live
    hypotheses; expansions ending in EOS move to the finished pool. Search
    stops when nothing is live, or when the pool holds ``beam_size``
    hypotheses and its best normalized score beats every live one.
    """
    beam = beam_size or model.config.beam_size
    if beam < 1:
        raise ValueError("beam_size must be >= 1")
    was_training = model.training
    model.eval()
    try:
        s = _Session(model, question_tokens)
        eos = model.eos
        alive = [((), 0.0)]
        finished = []
        for _ in range(model.config.max_decode_len):
            logp = s.step([p for p, _ in alive])
            total = np.array([sc for _, sc in alive])[:, None] + logp
            flat = total.ravel()
            order = np.argsort(-flat, kind="stable")[:beam]
            width = logp.shape[1]
            nxt = []
            for k in order:
                if not np.isfinite(flat[k]):
                    break
                h, a = divmod(int(k), width)
                seq = alive[h][0] + (a,)
                if a == eos:
                    finished.append((seq, flat[k]))
                else:
                    nxt.append((seq, flat[k]))
            alive = nxt
            if not alive:
                break
            if len(finished) >= beam:
                best_done = max(sc / len(seq) for seq, sc in finished)
                if best_done >= max(sc / len(seq) for seq, sc in alive):
                    break
        if finished:
            seq, sc = max(finished, key=lambda x: x[1] / len(x[0]))
            return s.result(seq, sc, False)
        seq, sc = max(alive, key=lambda x: x[1] / len(x[0]))
        return s.result(seq, sc, True)
    finally:
        model.train(was_training)
