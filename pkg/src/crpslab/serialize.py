"""JSON schemas for predictive distributions and fitted models.

Distribution schema (the CLI ``score --dist`` payload):
  {"type": "empirical", "atoms": [...], "weights": [...]}
  {"type": "gaussian", "m": ..., "sigma": ...}
  {"type": "mixture", "weights": [...], "components": [...]}

Model artifacts written by ``fit``/``sweep`` and consumed by ``aggregate``
carry a "kind" tag (emos | drn | knn | drf); KNN embeds its training sample,
DRF serializes its trees (feature/threshold/children arrays plus leaf member
lists) alongside the training responses.
"""

from __future__ import annotations

import numpy as np

from .distributions import GaussianLS, MixtureSpec, PredictiveDistribution, WeightedEmpirical
from .drf import DrfHyper, DrfModel
from .errors import InputError
from .models import DrnParams, EmosParams, KnnModel, ParamBox


def dist_to_dict(dist: PredictiveDistribution) -> dict:
    if isinstance(dist, WeightedEmpirical):
        return {"type": "empirical", "atoms": dist.atoms.tolist(), "weights": dist.weights.tolist()}
    if isinstance(dist, GaussianLS):
        return {"type": "gaussian", "m": dist.m, "sigma": dist.sigma}
    if isinstance(dist, MixtureSpec):
        return {
            "type": "mixture",
            "weights": dist.weights.tolist(),
            "components": [dist_to_dict(c) for c in dist.components],
        }
    raise InputError(f"unsupported distribution {type(dist).__name__}")


def dist_from_dict(payload: dict) -> PredictiveDistribution:
    if not isinstance(payload, dict) or "type" not in payload:
        raise InputError("distribution JSON needs a 'type' field")
    kind = payload["type"]
    if kind == "empirical":
        return WeightedEmpirical(np.asarray(payload["atoms"]), np.asarray(payload["weights"]))
    if kind == "gaussian":
        return GaussianLS(payload["m"], payload["sigma"])
    if kind == "mixture":
        return MixtureSpec(
            tuple(dist_from_dict(c) for c in payload["components"]),
            np.asarray(payload["weights"]),
        )
    raise InputError(f"unknown distribution type {kind!r}")


def _box_to_dict(box: ParamBox) -> dict:
    return {"lower": box.lower.tolist(), "upper": box.upper.tolist()}


def _box_from_dict(payload: dict) -> ParamBox:
    return ParamBox(np.asarray(payload["lower"]), np.asarray(payload["upper"]))


def model_to_dict(model) -> dict:
    if isinstance(model, EmosParams):
        return {
            "kind": "emos",
            "alpha": model.alpha,
            "beta": model.beta.tolist(),
            "alpha_s": model.alpha_s,
            "beta_s": model.beta_s.tolist(),
            "box": _box_to_dict(model.box),
        }
    if isinstance(model, DrnParams):
        return {
            "kind": "drn",
            "alpha": model.alpha,
            "beta": model.beta.tolist(),
            "alpha_s": model.alpha_s,
            "beta_s": model.beta_s.tolist(),
            "gamma": model.gamma.tolist(),
            "delta": model.delta.tolist(),
            "activation": model.activation,
            "box": _box_to_dict(model.box),
        }
    if isinstance(model, KnnModel):
        return {
            "kind": "knn",
            "k": model.k,
            "standardize": model.standardize,
            "train_x": model.train_x.tolist(),
            "train_y": model.train_y.tolist(),
        }
    if isinstance(model, DrfModel):
        return model.to_dict()
    raise InputError(f"unsupported model type {type(model).__name__}")


def _drf_from_dict(payload: dict) -> DrfModel:
    hyper = DrfHyper(**payload["hyper"])
    trees = payload["trees"]
    train_y = np.asarray(payload["train_y"], dtype=np.float64)
    num_trees = len(trees)
    max_nodes = max(len(t["feature"]) for t in trees)
    n_inbag = max(sum(len(v) for v in t["leaf_members"].values()) for t in trees)
    feature = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    thresh = np.zeros((num_trees, max_nodes))
    left = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    leaf_lo = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    leaf_hi = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    members = np.zeros((num_trees, n_inbag), dtype=np.int32)
    n_nodes = np.zeros(num_trees, dtype=np.int32)
    for b, tree in enumerate(trees):
        count = len(tree["feature"])
        n_nodes[b] = count
        feature[b, :count] = tree["feature"]
        thresh[b, :count] = tree["threshold"]
        left[b, :count] = tree["left"]
        right[b, :count] = tree["right"]
        cursor = 0
        for node_key, idx_list in tree["leaf_members"].items():
            node = int(node_key)
            leaf_lo[b, node] = cursor
            leaf_hi[b, node] = cursor + len(idx_list)
            members[b, cursor : cursor + len(idx_list)] = idx_list
            cursor += len(idx_list)
    order = np.argsort(train_y, kind="stable")
    rank = np.empty(train_y.size, dtype=np.int64)
    rank[order] = np.arange(train_y.size)
    return DrfModel(
        feature=feature,
        thresh=thresh,
        left=left,
        right=right,
        leaf_lo=leaf_lo,
        leaf_hi=leaf_hi,
        members=members,
        n_nodes=n_nodes,
        train_y=train_y,
        y_sorted=train_y[order],
        rank=rank,
        d=int(payload["d"]),
        hyper=hyper,
        seed=int(payload["seed"]),
    )


def model_from_dict(payload: dict):
    if not isinstance(payload, dict) or "kind" not in payload:
        raise InputError("model JSON needs a 'kind' field")
    kind = payload["kind"]
    if kind == "emos":
        return EmosParams(
            payload["alpha"],
            np.asarray(payload["beta"]),
            payload["alpha_s"],
            np.asarray(payload["beta_s"]),
            _box_from_dict(payload["box"]),
        )
    if kind == "drn":
        return DrnParams(
            payload["alpha"],
            np.asarray(payload["beta"]),
            payload["alpha_s"],
            np.asarray(payload["beta_s"]),
            np.asarray(payload["gamma"]),
            np.asarray(payload["delta"]),
            payload["activation"],
            _box_from_dict(payload["box"]),
        )
    if kind == "knn":
        return KnnModel(
            payload["k"],
            np.asarray(payload["train_x"]),
            np.asarray(payload["train_y"]),
            payload.get("standardize", False),
        )
    if kind == "drf":
        return _drf_from_dict(payload)
    raise InputError(f"unknown model kind {kind!r}")
