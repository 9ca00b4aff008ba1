"""Distributional random forest: CART trees, leaf co-membership weights.

Trees split by maximal variance reduction of the response among ``mtry``
randomly drawn candidate features, are grown on subsamples drawn without
replacement, and stop below ``2 * min_node_size`` points or on pure nodes.
The predictive distribution at x places weight

    w_i(x) = (1/B) sum_b 1{i in leaf_b(x)} / |leaf_b(x)|

on the i-th training response, counting in-bag members only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .distributions import WeightedEmpirical
from .errors import InputError

DEFAULT_NUM_TREES = 500


@dataclass(frozen=True)
class DrfHyper:
    """Forest hyperparameters; defaults follow the benchmarking protocol."""

    num_trees: int = DEFAULT_NUM_TREES
    mtry: int = 1
    sample_fraction: float = 0.9
    min_node_size: int = 1

    def __post_init__(self):
        if self.num_trees < 1:
            raise InputError("num_trees must be >= 1")
        if self.min_node_size < 1:
            raise InputError("min_node_size must be >= 1")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise InputError("sample_fraction must lie in (0, 1]")

    def with_mtry(self, mtry: int) -> "DrfHyper":
        return replace(self, mtry=mtry)


@dataclass(frozen=True)
class DrfModel:
    """Fitted forest: packed tree arrays plus the training responses."""

    feature: np.ndarray
    thresh: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray
    members: np.ndarray
    n_nodes: np.ndarray
    train_y: np.ndarray
    y_sorted: np.ndarray
    rank: np.ndarray
    d: int
    hyper: DrfHyper
    seed: int

    @property
    def num_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def n_train(self) -> int:
        return self.train_y.size

    def tree_as_dict(self, b: int) -> dict:
        """One tree in the documented JSON schema (arrays trimmed to used nodes)."""
        n = int(self.n_nodes[b])
        leaves = {}
        for node in range(n):
            if self.feature[b, node] < 0:
                lo, hi = int(self.leaf_lo[b, node]), int(self.leaf_hi[b, node])
                leaves[str(node)] = [int(i) for i in self.members[b, lo:hi]]
        return {
            "feature": self.feature[b, :n].tolist(),
            "threshold": self.thresh[b, :n].tolist(),
            "left": self.left[b, :n].tolist(),
            "right": self.right[b, :n].tolist(),
            "leaf_members": leaves,
        }

    def to_dict(self) -> dict:
        return {
            "kind": "drf",
            "d": self.d,
            "seed": self.seed,
            "hyper": {
                "num_trees": self.hyper.num_trees,
                "mtry": self.hyper.mtry,
                "sample_fraction": self.hyper.sample_fraction,
                "min_node_size": self.hyper.min_node_size,
            },
            "train_y": self.train_y.tolist(),
            "trees": [self.tree_as_dict(b) for b in range(self.num_trees)],
        }


def drf_fit(train_x, train_y, hyper: DrfHyper, seed: int) -> DrfModel:
    """Grow a deterministic forest; identical seeds give identical trees."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(train_x, dtype=np.float64)))
    Y = np.ascontiguousarray(np.asarray(train_y, dtype=np.float64).ravel())
    n, d = X.shape
    if Y.size != n or n == 0:
        raise InputError("training covariates and responses must align and be nonempty")
    if not 1 <= hyper.mtry <= d:
        raise InputError(f"mtry={hyper.mtry} outside [1, {d}]")
    if n < 2 * hyper.min_node_size:
        raise InputError("need at least 2 * min_node_size training points")
    n_inbag = int(math.ceil(hyper.sample_fraction * n))
    arrays = _kernels.grow_forest(
        X, Y, hyper.num_trees, hyper.mtry, n_inbag, hyper.min_node_size,
        int(seed) & 0x7FFFFFFFFFFFFFFF,  # numba types the argument as int64
    )
    feature, thresh, left, right, leaf_lo, leaf_hi, members, n_nodes = arrays
    order = np.argsort(Y, kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    y_sorted = Y[order]
    for arr in (*arrays, Y, y_sorted, rank):
        arr.setflags(write=False)
    return DrfModel(
        feature=feature,
        thresh=thresh,
        left=left,
        right=right,
        leaf_lo=leaf_lo,
        leaf_hi=leaf_hi,
        members=members,
        n_nodes=n_nodes,
        train_y=Y,
        y_sorted=y_sorted,
        rank=rank,
        d=d,
        hyper=hyper,
        seed=int(seed),
    )


def drf_weights_matrix(model: DrfModel, Xq) -> np.ndarray:
    """Forest weights for each query row; columns follow ``model.y_sorted``."""
    Xq = np.ascontiguousarray(np.atleast_2d(np.asarray(Xq, dtype=np.float64)))
    if Xq.shape[1] != model.d:
        raise InputError(f"covariate dimension {Xq.shape[1]} != model dimension {model.d}")
    return _kernels.forest_weights_dense(
        model.feature,
        model.thresh,
        model.left,
        model.right,
        model.leaf_lo,
        model.leaf_hi,
        model.members,
        Xq,
        model.rank,
        model.n_train,
    )


def drf_weights(model: DrfModel, x) -> np.ndarray:
    """Weight vector over the training indices (original order) at one point."""
    w_sorted = drf_weights_matrix(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return w_sorted[model.rank]


def drf_predict(model: DrfModel, x) -> WeightedEmpirical:
    """Predictive distribution at x; zero-weight training points are dropped."""
    w_sorted = drf_weights_matrix(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    keep = w_sorted > 0
    weights = w_sorted[keep]
    return WeightedEmpirical(model.y_sorted[keep], weights / weights.sum())
