"""Neural semantic parser: Transformer encoder-decoder with a copy pointer."""
from .actions import Copy, Gen, detokenize, oracle_actions
from .checkpoint import load_checkpoint, save_checkpoint
from .decode import DecodeResult, decode_beam, greedy_decode
from .model import ParserConfig, ParserModel, build_parser, build_vocabs
from .train import (UnfreezeSchedule, mask_tokens, mlm_pretrain, set_unfreeze_schedule,
                    train_parser, transfer_encoder)

__all__ = [
    "Copy", "Gen", "detokenize", "oracle_actions", "load_checkpoint", "save_checkpoint",
    "DecodeResult", "decode_beam", "greedy_decode", "ParserConfig", "ParserModel",
    "build_parser", "build_vocabs", "UnfreezeSchedule", "mask_tokens", "mlm_pretrain",
    "set_unfreeze_schedule", "train_parser", "transfer_encoder",
]
