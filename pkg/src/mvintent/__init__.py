"""Disentangled multi-view representations, collection intent, retrieval."""

from .dataio import MultiViewDataset, ViewSpec, load_dataset, save_dataset
from .model import (
    Checkpoint,
    LossWeights,
    ModelConfig,
    TrainResult,
    embed,
    train,
)
from .retrieval import (
    Collection,
    IntentWeights,
    RankedList,
    RetrievalIndex,
    collection_intent,
    compose,
    rank,
)
from .simulator import SimProtocol, SyntheticConfig, build_index, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "MultiViewDataset",
    "ViewSpec",
    "load_dataset",
    "save_dataset",
    "Checkpoint",
    "LossWeights",
    "ModelConfig",
    "TrainResult",
    "embed",
    "train",
    "Collection",
    "IntentWeights",
    "RankedList",
    "RetrievalIndex",
    "collection_intent",
    "compose",
    "rank",
    "SimProtocol",
    "SyntheticConfig",
    "build_index",
    "generate_synthetic",
    "__version__",
]
