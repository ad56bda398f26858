"""Self-describing checkpoint: one JSON header line, then torch-serialized weights."""
from __future__ import annotations

import io
import json

import torch

from ..bpe import BpeModel
from ..errors import CheckpointError
from .model import ParserConfig, ParserModel
from .vocab import Vocab

FORMAT = "bootparse-parser/1"


def save_checkpoint(model: ParserModel, path, history=None) -> None:
    state = {k: v.detach().cpu() for k, v in model.state_dict().items()}
    header = {
        "format": FORMAT,
        "config": model.config.as_dict(),
        "seed": model.config.seed,
        "param_shapes": {k: list(v.shape) for k, v in state.items()},
        "bpe": {"marker": model.bpe.marker, "merges": [list(m) for m in model.bpe.merges]},
        "src_vocab": {"specials": model.src_vocab.n_special, "itos": model.src_vocab.itos},
        "out_vocab": {"specials": model.out_vocab.n_special, "itos": model.out_vocab.itos},
        "history": history or {},
    }
    buf = io.BytesIO()
    torch.save(state, buf)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(buf.getvalue())


def _vocab(d):
    n = d["specials"]
    return Vocab(d["itos"][:n], d["itos"][n:])


def read_header(path) -> dict:
    try:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header ({exc})") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    return header


def load_checkpoint(path):
    """Returns ``(model, history)``; the model is in eval mode."""
    header = read_header(path)
    try:
        with open(path, "rb") as fh:
            fh.readline()
            state = torch.load(io.BytesIO(fh.read()), map_location="cpu", weights_only=True)
        config = ParserConfig.from_dict(header["config"])
        bpe = BpeModel([tuple(m) for m in header["bpe"]["merges"]], header["bpe"]["marker"])
        model = ParserModel(config, _vocab(header["src_vocab"]), _vocab(header["out_vocab"]), bpe)
        shapes = {k: list(v.shape) for k, v in state.items()}
        if shapes != header["param_shapes"]:
            raise CheckpointError(f"{path}: parameter shapes disagree with header")
        model.load_state_dict(state)
    except CheckpointError:
        raise
    except Exception as exc:  # torch raises a zoo of types here
        raise CheckpointError(f"{path}: cannot restore model ({exc})") from exc
    model.eval()
    return model, header.get("history", {})
