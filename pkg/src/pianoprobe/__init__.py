"""Perceptual regression harness for frozen-encoder piano embeddings.

Submodules:

- ``embedding_store``: the on-disk frame-embedding format.
- ``dataset``: labels, manifests, piece-disjoint fold splits.
- ``pooling``: sequence-to-vector reductions.
- ``nnet``: the regression head, its training loop, checkpoints.
- ``metrics``: R-squared evaluation and report objects.
- ``stats``: paired tests, rank correlation, bootstrap intervals.
- ``analysis``: late fusion, model comparison, external validations.
- ``runner``: experiment orchestration over a config file.
- ``reference``: published benchmark numbers for context.
- ``cli``: the ``pianoprobe`` command.
"""

from . import (  # noqa: F401
    analysis,
    dataset,
    embedding_store,
    errors,
    metrics,
    nnet,
    pooling,
    reference,
    rng,
    runner,
    stats,
)
from .errors import HarnessError  # noqa: F401

__version__ = "0.1.0"
