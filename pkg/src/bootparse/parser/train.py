"""Teacher-forced training, unfreeze schedules and MLM-style encoder pretraining."""
from __future__ import annotations

import copy as _copy
import logging
import math
import random
from dataclasses import dataclass

import torch
from torch import nn

from ..errors import AllExamplesSkipped, CopyTargetNotFound, DivergedLoss, EmptyCorpus
from .actions import copy_alternatives, oracle_actions
from .vocab import MASK, PAD

log = logging.getLogger(__name__)


# -- unfreezing ---------------------------------------------------------------

@dataclass(frozen=True)
class UnfreezeSchedule:
    """Which encoder groups (0 = embeddings, last = top layer) train in each epoch.

    ``rate`` picks the top ``ceil(rate * n_groups)`` groups as ever eligible.
    Gradual mode starts fully frozen and releases one eligible group per
    epoch, top first.
    """
    n_groups: int
    rate: float = 1.0
    gradual: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("unfreeze rate must lie in [0, 1]")

    @property
    def eligible(self) -> int:
        return min(self.n_groups, math.ceil(self.rate * self.n_groups - 1e-9))

    def trainable(self, epoch: int) -> list[int]:
        """Group indices trainable during ``epoch`` (0-based)."""
        k = min(epoch, self.eligible) if self.gradual else self.eligible
        return list(range(self.n_groups - k, self.n_groups))


def set_unfreeze_schedule(model, rate: float = 1.0, gradual: bool = False) -> UnfreezeSchedule:
    return UnfreezeSchedule(len(model.encoder_groups()), rate, gradual)


# -- batching -----------------------------------------------------------------

@dataclass
class Prepared:
    src: list[int]
    actions: list[int]
    alts: list[tuple[int, ...]]  # per step: all valid COPY positions (empty for GEN)


def _sampler(bpe, dropout, rng):
    memo = {}

    def segment(word):
        if word not in memo:
            memo[word] = bpe.sample_word(word, dropout, rng)
        return memo[word]
    return segment


def prepare(model, examples, bpe_dropout: float = 0.0, rng=None):
    """Oracle-encode examples; returns (prepared, skipped ids).

    With ``bpe_dropout`` each example gets a freshly sampled segmentation.
    """
    out, skipped = [], []
    for ex in examples:
        segment = _sampler(model.bpe, bpe_dropout, rng) if bpe_dropout else model.bpe.encode_word
        try:
            acts = oracle_actions(ex, model.bpe, copy=model.config.copy, segment=segment)
        except CopyTargetNotFound:
            skipped.append(ex.id)
            continue
        src_syms = [s for w in ex.question_tokens for s in segment(w)]
        if len(src_syms) > 500 or len(acts) > 500:
            skipped.append(ex.id)
            continue
        out.append(Prepared(model.source_lookup(src_syms), model.encode_actions(acts),
                            copy_alternatives(acts, src_syms)))
    return out, skipped


def collate(model, batch, unk_dropout=0.0, rng=None):
    b = len(batch)
    S = max(len(p.src) for p in batch)
    T = max(len(p.actions) for p in batch)
    nv = model.n_vocab
    src = torch.full((b, S), model.src_vocab[PAD], dtype=torch.long)
    in_ids = torch.full((b, T), model.eos, dtype=torch.long)
    in_copy = torch.full((b, T), -1, dtype=torch.long)
    target = torch.zeros((b, T, nv + S), dtype=torch.bool)
    for r, p in enumerate(batch):
        ids = p.src
        if unk_dropout and rng is not None:
            ids = [model.unk_of(i) if rng.random() < unk_dropout else i for i in ids]
        src[r, :len(ids)] = torch.tensor(ids)
        dec_ids, dec_copy = model.decoder_inputs(p.actions[:-1])
        in_ids[r, :len(dec_ids)] = torch.tensor(dec_ids)
        in_copy[r, :len(dec_copy)] = torch.tensor(dec_copy)
        for t, (a, alt) in enumerate(zip(p.actions, p.alts)):
            if alt:
                for i in alt:
                    target[r, t, nv + i] = True
            else:
                target[r, t, a] = True
    src_pad = src == model.src_vocab[PAD]
    steps = torch.zeros((b, T), dtype=torch.bool)
    for r, p in enumerate(batch):
        steps[r, :len(p.actions)] = True
    return src, src_pad, in_ids, in_copy, target, steps


def batch_loss(model, batch, unk_dropout=0.0, rng=None):
    """Mean over action steps of -log sum_{valid a} p(a); summed over valid COPY positions."""
    src, src_pad, in_ids, in_copy, target, steps = collate(model, batch, unk_dropout, rng)
    logp = model(src, src_pad, in_ids, in_copy)
    picked = torch.logsumexp(logp.masked_fill(~target, float("-inf")), dim=-1)
    return -(picked[steps]).mean()


def _batches(items, size, rng=None):
    idx = list(range(len(items)))
    if rng is not None:
        rng.shuffle(idx)
    for s in range(0, len(idx), size):
        yield [items[i] for i in idx[s:s + size]]


def evaluate_loss(model, prepared) -> float:
    was = model.training
    model.eval()
    total, steps = 0.0, 0
    with torch.no_grad():
        for batch in _batches(prepared, model.config.batch_size):
            n = sum(len(p.actions) for p in batch)
            total += float(batch_loss(model, batch)) * n
            steps += n
    model.train(was)
    return total / max(steps, 1)


def train_parser(model, train, dev=None, config=None, schedule: UnfreezeSchedule | None = None,
                 max_steps: int | None = None, dev_exact_match: bool = False):
    """Fit ``model`` with Adam and early stopping on dev loss.

    Returns ``(model, history)``; the model holds the best-dev-loss weights.
    ``max_steps`` caps total optimizer steps (used by tests). With
    ``dev_exact_match`` the best model is beam-decoded on dev and the
    accuracy is stored in the history.
    """
    cfg = config or model.config
    train_p, skipped = prepare(model, train)
    if not train_p:
        raise AllExamplesSkipped(f"no usable training examples ({len(skipped)} skipped)")
    if skipped:
        log.warning("skipped %d training examples without copy targets", len(skipped))
    dev_p, dev_skipped = prepare(model, dev) if dev is not None and len(dev) else ([], [])
    schedule = schedule or set_unfreeze_schedule(model, 1.0, False)

    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    drop_rng = random.Random(cfg.seed + 1)
    seg_rng = random.Random(cfg.seed + 2)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    history = {"epochs": [], "skipped_train": len(skipped), "skipped_dev": len(dev_skipped),
               "seed": cfg.seed}
    best, best_state, bad = math.inf, None, 0
    steps = 0
    model.train()
    for epoch in range(cfg.max_epochs):
        groups = schedule.trainable(epoch)
        model.set_trainable_groups(groups)
        if cfg.bpe_dropout:
            train_p, _ = prepare(model, train, cfg.bpe_dropout, seg_rng)
        total, n = 0.0, 0
        for batch in _batches(train_p, cfg.batch_size, rng):
            opt.zero_grad(set_to_none=True)
            loss = batch_loss(model, batch, cfg.unk_dropout, drop_rng)
            if not torch.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}, step {steps}")
            loss.backward()
            opt.step()
            steps += 1
            total += float(loss.detach()) * len(batch)
            n += len(batch)
            if max_steps is not None and steps >= max_steps:
                break
        rec = {"epoch": epoch, "train_loss": total / n, "trainable_groups": groups}
        if dev_p:
            rec["dev_loss"] = evaluate_loss(model, dev_p)
        history["epochs"].append(rec)
        log.info("epoch %d %s", epoch, rec)
        metric = rec.get("dev_loss", rec["train_loss"])
        if metric < best - 1e-12:
            best, bad = metric, 0
            best_state = _copy.deepcopy(model.state_dict())
            history["best_epoch"] = epoch
        else:
            bad += 1
            if bad >= cfg.patience:
                break
        if max_steps is not None and steps >= max_steps:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.set_trainable_groups(range(len(model.encoder_groups())))
    history["steps"] = steps
    model.eval()
    if dev_exact_match and dev is not None and len(dev):
        from .decode import decode_beam
        from ..evalkit import exact_match
        preds = {ex.id: decode_beam(model, ex.question_tokens).mrl for ex in dev}
        golds = {ex.id: str(ex.mrl) for ex in dev}
        history["best_dev_exact_match"] = exact_match(preds, golds).exact_match_accuracy
    return model, history


# -- MLM pretraining ------------------------------------------------------------

def mask_tokens(ids: torch.Tensor, pad: torch.Tensor, n_special: int, vocab_size: int,
                mask_id: int, gen: torch.Generator, rate: float = 0.15):
    """Mask exactly round(rate * N) of the N real positions (80/10/10 split).

    Returns ``(inputs, targets, chosen)`` where ``targets`` is -100 outside
    the chosen positions.
    """
    real = (~pad).nonzero(as_tuple=False)
    n = real.shape[0]
    k = max(1, int(round(rate * n))) if n else 0
    perm = torch.randperm(n, generator=gen)[:k]
    pos = real[perm]
    inputs = ids.clone()
    targets = torch.full_like(ids, -100)
    targets[pos[:, 0], pos[:, 1]] = ids[pos[:, 0], pos[:, 1]]
    n_mask = int(round(0.8 * k))
    n_rand = int(round(0.1 * k))
    m = pos[:n_mask]
    inputs[m[:, 0], m[:, 1]] = mask_id
    r = pos[n_mask:n_mask + n_rand]
    if len(r) and vocab_size > n_special:
        inputs[r[:, 0], r[:, 1]] = torch.randint(n_special, vocab_size, (len(r),), generator=gen)
    chosen = torch.zeros_like(pad)
    chosen[pos[:, 0], pos[:, 1]] = True
    return inputs, targets, chosen


def mlm_pretrain(model, sentences, epochs: int = 5, batch_size: int = 64,
                 learning_rate: float = 1e-3, seed: int = 0):
    """Train the encoder (embeddings + layers) to recover masked source symbols.

    A temporary linear head maps encoder states to the source vocabulary and
    is discarded afterwards. Returns the per-epoch mean loss.
    """
    seqs = [model.source_lookup(model.bpe.encode(s)) for s in sentences if len(s)]
    if not seqs:
        raise EmptyCorpus("MLM pretraining needs at least one non-empty sentence")
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    rng = random.Random(seed)
    head = nn.Linear(model.config.model_dim, len(model.src_vocab))
    params = [p for g in model.encoder_groups() for p in g] + list(head.parameters())
    opt = torch.optim.Adam(params, lr=learning_rate)
    pad_id = model.src_vocab[PAD]
    mask_id = model.src_vocab[MASK]
    losses = []
    model.train()
    for epoch in range(epochs):
        total, n = 0.0, 0
        for batch in _batches(seqs, batch_size, rng):
            S = max(len(s) for s in batch)
            ids = torch.full((len(batch), S), pad_id, dtype=torch.long)
            for r, s in enumerate(batch):
                ids[r, :len(s)] = torch.tensor(s)
            pad = ids == pad_id
            inputs, targets, _ = mask_tokens(ids, pad, model.src_vocab.n_special,
                                             len(model.src_vocab), mask_id, gen)
            opt.zero_grad(set_to_none=True)
            logits = head(model.encode(inputs, pad))
            loss = nn.functional.cross_entropy(logits.view(-1, logits.shape[-1]), targets.view(-1),
                                               ignore_index=-100)
            if not torch.isfinite(loss):
                raise DivergedLoss(f"non-finite MLM loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(batch)
            n += len(batch)
        losses.append(total / n)
        log.info("mlm epoch %d loss %.4f", epoch, losses[-1])
    model.eval()
    return losses


def transfer_encoder(src_model, dst_model) -> int:
    """Copy encoder weights; embedding rows are matched by symbol. Returns rows copied."""
    if (src_model.config.model_dim, src_model.config.enc_layers, src_model.config.heads,
            src_model.config.ffn_dim) != (dst_model.config.model_dim, dst_model.config.enc_layers,
                                          dst_model.config.heads, dst_model.config.ffn_dim):
        raise ValueError("encoder shapes differ")
    with torch.no_grad():
        dst_model.enc_layers.load_state_dict(src_model.enc_layers.state_dict())
        dst_model.enc_norm.load_state_dict(src_model.enc_norm.state_dict())
        rows = 0
        for sym, i in dst_model.src_vocab.stoi.items():
            j = src_model.src_vocab.stoi.get(sym)
            if j is not None:
                dst_model.src_emb.weight[i] = src_model.src_emb.weight[j]
                rows += 1
    return rows


__all__ = ["UnfreezeSchedule", "set_unfreeze_schedule", "train_parser", "mlm_pretrain",
           "mask_tokens", "transfer_encoder", "batch_loss", "prepare", "evaluate_loss"]
