"""Fair attribute completion on graphs with adversarial debiasing."""

from .graph import UNLABELED, DataSplit, Graph, make_split
from .model import FairACConfig, FairACModel, FairACTrainer, produce_embeddings

__all__ = [
    "UNLABELED",
    "DataSplit",
    "FairACConfig",
    "FairACModel",
    "FairACTrainer",
    "Graph",
    "make_split",
    "produce_embeddings",
]
__version__ = "0.1.0"
