"""Stage I: compositional encoder, EMA codebook, decoder, training loop."""

from .codebook import (
    Codebook,
    ema_update,
    init_codebook,
    lookup,
    quantize,
    seed_codebook_from_features,
    usage_counts,
    usage_perplexity,
)
from .model import (
    DecoderParams,
    EncoderParams,
    TokenizerConfig,
    TokenizerModel,
    decode,
    decode_bwd,
    encode,
    encode_bwd,
    detokenize,
    load_tokenizer,
    make_tokenizer,
    paper_scale_reference,
    save_tokenizer,
    tokenize,
    tokenizer_tensors,
)
from .training import (
    FrozenQuantization,
    PctLossResult,
    TrainingDiverged,
    build_context,
    pct_loss,
    reconstruction_metrics,
    train_tokenizer,
)

__all__ = [
    "Codebook",
    "DecoderParams",
    "EncoderParams",
    "FrozenQuantization",
    "PctLossResult",
    "TokenizerConfig",
    "TokenizerModel",
    "TrainingDiverged",
    "build_context",
    "decode",
    "decode_bwd",
    "detokenize",
    "ema_update",
    "encode",
    "encode_bwd",
    "init_codebook",
    "load_tokenizer",
    "lookup",
    "make_tokenizer",
    "paper_scale_reference",
    "pct_loss",
    "quantize",
    "reconstruction_metrics",
    "save_tokenizer",
    "seed_codebook_from_features",
    "tokenize",
    "tokenizer_tensors",
    "train_tokenizer",
    "usage_counts",
    "usage_perplexity",
]
