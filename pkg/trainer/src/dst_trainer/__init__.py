"""Contrastive retriever training for the ICL-DST pipeline."""

from .training import TrainJob, embed_corpus, train

__all__ = ["TrainJob", "embed_corpus", "train"]

__version__ = "0.1.0"
