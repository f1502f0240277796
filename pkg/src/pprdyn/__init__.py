"""Dynamic Personalized PageRank and PPR-based node representations."""
from .embedding import PPREmbedding
from .estimator import DynamicPPR
from .graph import DynamicGraph

__version__ = "0.1.0"
__all__ = ["DynamicGraph", "DynamicPPR", "PPREmbedding"]
