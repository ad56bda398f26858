"""Transformer encoder-decoder whose output space is vocabulary symbols plus source positions.

At every step the decoder's vocabulary logits and a single-head copy
scorer's attention scores over the source are concatenated and passed
through one softmax, so generating and pointing compete directly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F
from torch import nn

from .vocab import EOS, MASK, PAD, UNK, UNK_END, Vocab

MAX_POSITIONS = 512


@dataclass
class ParserConfig:
    enc_layers: int = 2
    dec_layers: int = 2
    model_dim: int = 128
    heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.1
    max_decode_len: int = 64
    beam_size: int = 4
    learning_rate: float = 3e-4
    batch_size: int = 32
    patience: int = 5
    max_epochs: int = 50
    seed: int = 0
    copy: bool = True
    unk_dropout: float = 0.0  # chance of hiding a source symbol as <unk> during training
    bpe_dropout: float = 0.0  # chance of skipping each merge when segmenting training examples

    def __post_init__(self):
        for f in ("enc_layers", "dec_layers", "model_dim", "heads", "ffn_dim",
                  "max_decode_len", "beam_size", "batch_size", "patience", "max_epochs"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.model_dim % self.heads:
            raise ValueError("model_dim must be divisible by heads")
        if not all(0 <= r < 1 for r in (self.dropout, self.unk_dropout, self.bpe_dropout)):
            raise ValueError("dropout rates must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ParserConfig":
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in types:
                raise KeyError(f"unknown parser option {k!r}")
            if types[k] == "bool" and isinstance(v, str):
                v = v.lower() in ("1", "true", "yes", "on")
            out[k] = {"int": int, "float": float, "bool": bool}[types[k]](v)
        return cls(**out)

    def as_dict(self):
        return asdict(self)


def sinusoidal_positions(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(n, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe


class Attention(nn.Module):
    def __init__(self, d, heads, dropout):
        super().__init__()
        self.h = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mem, key_pad=None, causal=False):
        b, t, d = x.shape
        s = mem.shape[1]
        dh = d // self.h
        q = self.q(x).view(b, t, self.h, dh).transpose(1, 2)
        k = self.k(mem).view(b, s, self.h, dh).transpose(1, 2)
        v = self.v(mem).view(b, s, self.h, dh).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        if causal:
            future = torch.ones(t, s, dtype=torch.bool, device=x.device).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        att = self.drop(scores.softmax(-1))
        return self.o((att @ v).transpose(1, 2).reshape(b, t, d))


class FeedForward(nn.Module):
    def __init__(self, d, ffn, dropout):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d, ffn), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ffn, d))

    def forward(self, x):
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ParserConfig):
        super().__init__()
        d = cfg.model_dim
        self.ln1, self.ln2 = nn.LayerNorm(d), nn.LayerNorm(d)
        self.attn = Attention(d, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(d, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, pad):
        y = self.ln1(x)
        x = x + self.drop(self.attn(y, y, pad))
        return x + self.drop(self.ffn(self.ln2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ParserConfig):
        super().__init__()
        d = cfg.model_dim
        self.ln1, self.ln2, self.ln3 = nn.LayerNorm(d), nn.LayerNorm(d), nn.LayerNorm(d)
        self.self_attn = Attention(d, cfg.heads, cfg.dropout)
        self.cross_attn = Attention(d, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(d, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mem, src_pad):
        y = self.ln1(x)
        x = x + self.drop(self.self_attn(y, y, causal=True))
        x = x + self.drop(self.cross_attn(self.ln2(x), mem, src_pad))
        return x + self.drop(self.ffn(self.ln3(x)))


class ParserModel(nn.Module):
    """Seq2seq parser over BPE symbols.

    Actions are integers: ``a < len(out_vocab)`` generates ``out_vocab.itos[a]``,
    ``a >= len(out_vocab)`` copies source position ``a - len(out_vocab)``.
    """

    def __init__(self, config: ParserConfig, src_vocab: Vocab, out_vocab: Vocab, bpe):
        super().__init__()
        self.config = config
        self.src_vocab = src_vocab
        self.out_vocab = out_vocab
        self.bpe = bpe
        d = config.model_dim
        nv = len(out_vocab)
        self.bos_id, self.copy_id = nv, nv + 1
        self.src_emb = nn.Embedding(len(src_vocab), d)
        self.word_start_emb = nn.Embedding(2, d)  # is the symbol word-initial?
        final = [s.endswith(bpe.marker) for s in src_vocab.itos]
        self.register_buffer("word_final", torch.tensor(final, dtype=torch.bool), persistent=False)
        self.enc_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.enc_layers))
        self.enc_norm = nn.LayerNorm(d)
        self.dec_emb = nn.Embedding(nv + 2, d)
        self.copy_in = nn.Linear(d, d)
        self.dec_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.dec_layers))
        self.dec_norm = nn.LayerNorm(d)
        self.out_proj = nn.Linear(d, nv)
        self.copy_q = nn.Linear(d, d)
        self.copy_k = nn.Linear(d, d)
        self.copy_next = nn.Parameter(torch.tensor(4.0))  # bias toward the position after the last copy
        self.drop = nn.Dropout(config.dropout)
        self.register_buffer("pe", sinusoidal_positions(MAX_POSITIONS, d).float(), persistent=False)
        # embeddings are scaled by sqrt(d) on use; start them at unit scale so
        # position signals are not swamped
        for emb in (self.src_emb, self.dec_emb, self.word_start_emb):
            nn.init.normal_(emb.weight, std=d ** -0.5)

    @property
    def n_vocab(self) -> int:
        return len(self.out_vocab)

    @property
    def eos(self) -> int:
        return self.out_vocab.stoi[EOS]

    # -- parameter groups -----------------------------------------------------

    def encoder_groups(self) -> list[list[nn.Parameter]]:
        """Embedding group first, then one group per encoder layer (top layer last)."""
        groups = [list(self.src_emb.parameters()) + list(self.word_start_emb.parameters())]
        for layer in self.enc_layers:
            groups.append(list(layer.parameters()))
        groups[-1] = groups[-1] + list(self.enc_norm.parameters())
        return groups

    def set_trainable_groups(self, trainable) -> None:
        trainable = set(trainable)
        for k, group in enumerate(self.encoder_groups()):
            for p in group:
                p.requires_grad_(k in trainable)

    # -- forward pieces -------------------------------------------------------

    def encode(self, src, src_pad):
        final = self.word_final[src]
        start = torch.cat([torch.ones_like(final[:, :1]), final[:, :-1]], dim=1)
        x = (self.src_emb(src) + self.word_start_emb(start.long())) * math.sqrt(self.config.model_dim)
        x = self.drop(x + self.pe[: src.shape[1]].to(x.dtype))
        for layer in self.enc_layers:
            x = layer(x, src_pad)
        return self.enc_norm(x)

    def decoder_hidden(self, memory, src_pad, in_ids, in_copy):
        x = self.dec_emb(in_ids)
        is_copy = (in_copy >= 0).unsqueeze(-1)
        idx = in_copy.clamp(min=0).unsqueeze(-1).expand(-1, -1, memory.shape[-1])
        copied = self.copy_in(torch.gather(memory, 1, idx))
        x = x + torch.where(is_copy, copied, torch.zeros_like(copied))
        x = x * math.sqrt(self.config.model_dim)
        x = self.drop(x + self.pe[: in_ids.shape[1]].to(x.dtype))
        for layer in self.dec_layers:
            x = layer(x, memory, src_pad)
        return self.dec_norm(x)

    def action_scores(self, hidden, memory, src_pad, in_copy=None):
        """Vocabulary logits concatenated with copy scores: (B, T, |V| + S).

        ``in_copy`` holds the source position copied by the previous action
        (-1 otherwise); the position right after it gets a learned bonus.
        """
        vocab = self.out_proj(hidden)
        if self.config.copy:
            q = self.copy_q(hidden)
            k = self.copy_k(memory)
            copy = q @ k.transpose(-1, -2) / math.sqrt(self.config.model_dim)
            if in_copy is not None:
                pos = torch.arange(memory.shape[1], device=memory.device)
                nxt = (in_copy >= 0).unsqueeze(-1) & (pos == (in_copy + 1).unsqueeze(-1))
                copy = copy + self.copy_next * nxt.to(copy.dtype)
            copy = copy.masked_fill(src_pad[:, None, :], float("-inf"))
        else:
            copy = hidden.new_full((*hidden.shape[:2], memory.shape[1]), float("-inf"))
        return torch.cat([vocab, copy], dim=-1)

    def forward(self, src, src_pad, in_ids, in_copy):
        memory = self.encode(src, src_pad)
        hidden = self.decoder_hidden(memory, src_pad, in_ids, in_copy)
        return F.log_softmax(self.action_scores(hidden, memory, src_pad, in_copy), dim=-1)

    # -- helpers over single examples ----------------------------------------

    def source_lookup(self, src_symbols) -> list[int]:
        """Symbol ids; unknown word-final symbols map to a separate unknown id."""
        stoi, m = self.src_vocab.stoi, self.bpe.marker
        unk, unk_end = stoi[UNK], stoi[UNK_END]
        return [stoi.get(s, unk_end if s.endswith(m) else unk) for s in src_symbols]

    def unk_of(self, sym_id: int) -> int:
        sym = self.src_vocab.itos[sym_id]
        return self.src_vocab.stoi[UNK_END if sym.endswith(self.bpe.marker) else UNK]

    def source_ids(self, src_symbols) -> torch.Tensor:
        return torch.tensor([self.source_lookup(src_symbols)], dtype=torch.long)

    def decoder_inputs(self, prefix):
        """Map an action prefix to decoder input ids / copy positions (BOS first)."""
        ids, copy = [self.bos_id], [-1]
        for a in prefix:
            if a < self.n_vocab:
                ids.append(a)
                copy.append(-1)
            else:
                ids.append(self.copy_id)
                copy.append(a - self.n_vocab)
        return ids, copy

    def encode_actions(self, actions) -> list[int]:
        from .actions import Copy
        return [self.n_vocab + a.index if isinstance(a, Copy) else self.out_vocab[a.symbol]
                for a in actions]

    def decode_actions(self, ids) -> list:
        from .actions import Copy, Gen
        return [Gen(self.out_vocab.itos[a]) if a < self.n_vocab else Copy(a - self.n_vocab)
                for a in ids]

    def action_distribution(self, src_symbols, prefix) -> torch.Tensor:
        """Probabilities over the next |V| + len(src_symbols) actions."""
        if len(prefix) >= self.config.max_decode_len:
            raise ValueError("prefix already at max_decode_len")
        src = self.source_ids(src_symbols)
        pad = torch.zeros_like(src, dtype=torch.bool)
        ids, copy = self.decoder_inputs(prefix)
        with torch.no_grad():
            logp = self(src, pad, torch.tensor([ids]), torch.tensor([copy]))
        return logp[0, -1].exp()


def build_vocabs(bpe, examples, copy: bool = True, extra_sentences=(), extra_symbols: bool = False):
    """Source vocabulary from encoded questions (+ extra text); output vocabulary from MRLs."""
    from ..mrl import is_structural
    src = Vocab([PAD, UNK, MASK, UNK_END])
    for toks in extra_sentences:
        for sym in bpe.encode(toks):
            src.add(sym)
    out = Vocab([EOS, UNK])
    chars = set()
    for ex in examples:
        for sym in bpe.encode(ex.question_tokens):
            src.add(sym)
        for w in ex.question_tokens:
            if not is_structural(w):
                chars.update(w)
        for tok in ex.mrl.tokens():
            if is_structural(tok):
                out.add(bpe.encode_word(tok)[0])
            elif not copy:
                for sym in bpe.encode_word(tok):
                    out.add(sym)
    if extra_symbols:
        # every merge product and single character, reachable under BPE dropout
        extra = sorted({c for c in chars} | {c + bpe.marker for c in chars} | bpe.vocabulary)
        for sym in extra:
            src.add(sym)
            if not copy:
                out.add(sym)
    return src, out


def build_parser(bpe, examples, config: ParserConfig | None = None, extra_sentences=()):
    config = config or ParserConfig()
    torch.manual_seed(config.seed)
    src, out = build_vocabs(bpe, examples, config.copy, extra_sentences)
    return ParserModel(config, src, out, bpe)
