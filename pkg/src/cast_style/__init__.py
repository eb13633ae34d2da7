"""Context-aware text style transfer: dual-encoder seq2seq trained on
parallel and non-parallel data, regularized by frozen style and coherence
classifiers."""

__version__ = "0.1.0"
