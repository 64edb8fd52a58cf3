"""Multi-level VAE for long text generation."""

from ._mlvae import (
    bleu,
    build_vocab,
    ConfigError,
    corpus_bleu,
    DimensionError,
    diversity_report,
    IoError,
    MlvaeError,
    Model,
    ngram_entropy,
    NumericError,
    OutOfRangeError,
    paired_corpus,
    PreconditionError,
    random_corpus,
    segment,
    self_bleu,
    sentiment_corpus,
    topic_corpus,
    train,
    unique_ngrams,
    UsageError,
)

__all__ = [
    "bleu",
    "build_vocab",
    "ConfigError",
    "corpus_bleu",
    "DimensionError",
    "diversity_report",
    "IoError",
    "MlvaeError",
    "Model",
    "ngram_entropy",
    "NumericError",
    "OutOfRangeError",
    "paired_corpus",
    "PreconditionError",
    "random_corpus",
    "segment",
    "self_bleu",
    "sentiment_corpus",
    "topic_corpus",
    "train",
    "unique_ngrams",
    "UsageError",
]
