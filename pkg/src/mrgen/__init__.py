"""Multi-resolution generative modeling of graphs via community coarsening."""

from mrgen.estimator import HierarchyBuilder, MRGGraphGenerator, check_leaf_graphs
from mrgen.graphs import (
    CommunityAssignment,
    HierarchicalGraph,
    SubgraphBlock,
    WeightedGraph,
    build_hierarchy,
    coarsen_once,
    extract_blocks,
    louvain,
)
from mrgen.model import (
    MRGModel,
    TrainConfig,
    generate,
    generate_many,
    hg_loglik,
    init_model,
    load_model,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CommunityAssignment",
    "HierarchicalGraph",
    "HierarchyBuilder",
    "MRGGraphGenerator",
    "MRGModel",
    "SubgraphBlock",
    "TrainConfig",
    "WeightedGraph",
    "build_hierarchy",
    "check_leaf_graphs",
    "coarsen_once",
    "extract_blocks",
    "generate",
    "generate_many",
    "hg_loglik",
    "init_model",
    "load_model",
    "louvain",
    "save_model",
    "train",
    "__version__",
]
