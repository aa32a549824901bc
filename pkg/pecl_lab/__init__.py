"""Species-presence prediction with a paired-embeddings contrastive regulariser."""

__version__ = "0.1.0"
