"""Scikit-learn style wrappers: fit on a list of graphs, sample new ones.

``MRGGraphGenerator`` follows the estimator protocol (``get_params`` /
``set_params`` / ``fit`` / ``score``) plus the ``sample`` verb that sklearn's
density models use, so it clones, grid-searches and pipelines like any other
estimator.  ``HierarchyBuilder`` is the transformer view of the coarsening
stage.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from mrgen import model as _model
from mrgen.graphs import HierarchicalGraph, WeightedGraph, build_hierarchy

__all__ = ["check_leaf_graphs", "HierarchyBuilder", "MRGGraphGenerator"]


def check_leaf_graphs(X) -> list[WeightedGraph]:
    """Validate an iterable of leaf graphs, returning it as a list."""
    if isinstance(X, WeightedGraph):
        raise TypeError("expected an iterable of WeightedGraph, got a single graph")
    graphs = list(X)
    if not graphs:
        raise ValueError("empty graph collection")
    for i, g in enumerate(graphs):
        if not isinstance(g, WeightedGraph):
            raise TypeError(f"item {i} is {type(g).__name__}, expected WeightedGraph")
        if not g.leaf:
            raise ValueError(f"item {i} is not a leaf graph")
        if g.n < 1:
            raise ValueError(f"item {i} has no nodes")
    return graphs


class HierarchyBuilder(BaseEstimator, TransformerMixin):
    """Stateless transformer from leaf graphs to coarsened hierarchies."""

    def __init__(self, depth: int = 2, seed: int = 0):
        self.depth = depth
        self.seed = seed

    def fit(self, X, y=None):
        check_leaf_graphs(X)
        self.n_features_in_ = 0  # no tabular features; kept for sklearn compat
        return self

    def transform(self, X) -> list[HierarchicalGraph]:
        graphs = check_leaf_graphs(X)
        return [build_hierarchy(g, self.depth, self.seed) for g in graphs]


class MRGGraphGenerator(BaseEstimator):
    """Hierarchical graph generator with a fit/sample/score surface.

    Parameters mirror the training configuration: ``depth`` levels below the
    root, ``n_mixtures`` output mixtures, hidden width ``d_h``, ``gnn_layers``
    rounds of message passing, the leaf output head, optional parameter
    sharing across levels, and the Adam schedule.  ``input_width="auto"``
    sizes the feature window to the largest level seen during fit.
    """

    def __init__(
        self,
        depth: int = 2,
        d_h: int = 32,
        n_mixtures: int = 6,
        gnn_layers: int = 3,
        leaf_head: str = "multihot",
        shared_levels: bool = False,
        input_width: int | str = "auto",
        lr: float = 5e-4,
        epochs: int = 30,
        batch_size: int = 16,
        seed: int = 0,
        threads: int = 1,
    ):
        self.depth = depth
        self.d_h = d_h
        self.n_mixtures = n_mixtures
        self.gnn_layers = gnn_layers
        self.leaf_head = leaf_head
        self.shared_levels = shared_levels
        self.input_width = input_width
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.threads = threads

    # -- fitting ------------------------------------------------------------

    def _hierarchies(self, X) -> list[HierarchicalGraph]:
        return HierarchyBuilder(self.depth, self.seed).transform(X)

    def fit(self, X, y=None):
        """Coarsen the graphs, then maximize their hierarchy likelihood."""
        hgs = self._hierarchies(X)
        if self.input_width == "auto":
            width = max(max(lv.n for lv in hg.levels) for hg in hgs)
        else:
            width = int(self.input_width)
        model = _model.init_model(
            seed=self.seed,
            depth=self.depth,
            input_width=width,
            d_h=self.d_h,
            K=self.n_mixtures,
            gnn_layers=self.gnn_layers,
            leaf_head=self.leaf_head,
            shared=self.shared_levels,
        )
        result = _model.train(
            model,
            hgs,
            _model.TrainConfig(
                epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, seed=self.seed
            ),
        )
        self.model_ = result.model
        self.loss_trace_ = result.loss_trace
        self.input_width_ = width
        self.n_graphs_ = len(hgs)
        return self

    # -- inference ----------------------------------------------------------

    def sample(self, n_samples: int = 1, seed: int | None = None) -> list[WeightedGraph]:
        """Generate leaf graphs from the fitted model."""
        return [hg.leaf for hg in self.sample_hierarchies(n_samples, seed)]

    def sample_hierarchies(self, n_samples: int = 1, seed: int | None = None) -> list[HierarchicalGraph]:
        check_is_fitted(self, "model_")
        seed = self.seed if seed is None else seed
        return _model.generate_many(self.model_, n_samples, seed=seed, threads=self.threads)

    def score_samples(self, X) -> np.ndarray:
        """Per-graph hierarchy log-likelihoods."""
        check_is_fitted(self, "model_")
        return np.array([_model.hg_loglik(self.model_, hg) for hg in self._hierarchies(X)])

    def score(self, X, y=None) -> float:
        """Mean hierarchy log-likelihood (higher is better)."""
        return float(np.mean(self.score_samples(X)))
