"""CART classification trees and a bagged Random Forest with mean decrease in Gini.

Trees are binary with numeric thresholds; rows with ``x < threshold`` go
left. A node of ``n`` rows is split only when it is impure, ``n >=
max(2, min_node_size)``, it is above ``max_depth``, and some candidate split
decreases Gini impurity by more than ``TIE_EPS``. Candidate predictors are
drawn among those that are not constant inside the node.

Ties are broken deterministically: splits prefer the lower predictor index
and then the lower threshold; leaf classes and ensemble votes prefer the lower
occupancy level.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Optional, Sequence, Union

import numba
import numpy as np

from .core import N_LEVELS, OccupancyLevel, derive_rng

TIE_EPS = 1e-12
MODEL_FORMAT = "occforecast-forest"
MODEL_VERSION = 1


def gini(class_counts: Sequence[float]) -> float:
    """Gini impurity ``1 - sum((c_i / n)^2)``."""
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("negative class count")
    n = counts.sum()
    if n <= 0:
        raise ValueError("gini of an empty node")
    return float(1.0 - np.sum((counts / n) ** 2))


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _best_split_node(X, y, idx, cands):
    n = idx.shape[0]
    total = np.zeros(N_LEVELS, np.int64)
    for i in range(n):
        total[y[idx[i]]] += 1
    sq_total = 0
    for c in range(N_LEVELS):
        sq_total += total[c] * total[c]
    g_parent = 1.0 - sq_total / (n * n)
    best_f = -1
    best_thr = 0.0
    best_dec = 0.0
    vals = np.empty(n)
    left = np.zeros(N_LEVELS, np.int64)
    for ci in range(cands.shape[0]):
        f = cands[ci]
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        left[:] = 0
        sq_l = 0
        sq_r = sq_total
        for k in range(n - 1):
            c = y[idx[order[k]]]
            sq_r -= 2 * (total[c] - left[c]) - 1
            sq_l += 2 * left[c] + 1
            left[c] += 1
            v0 = vals[order[k]]
            v1 = vals[order[k + 1]]
            if v0 == v1:
                continue
            nl = k + 1
            nr = n - nl
            dec = g_parent - (nl - sq_l / nl) / n - (nr - sq_r / nr) / n
            if dec > best_dec + TIE_EPS:
                best_dec = dec
                best_f = f
                best_thr = 0.5 * (v0 + v1)
    return best_f, best_thr, best_dec


@numba.njit(cache=True)
def _grow(X, y, keys, mtry, min_node_size, max_depth):
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    counts = np.zeros((cap, N_LEVELS), np.int32)
    decrease = np.zeros(cap)
    rows = np.arange(n)
    scratch = np.empty(n, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    min_split = max(2, min_node_size)
    nonconst = np.empty(p, np.int64)
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        idx = rows[lo:hi]
        m = hi - lo
        n_present = 0
        for i in range(m):
            counts[node, y[idx[i]]] += 1
        for c in range(N_LEVELS):
            if counts[node, c] > 0:
                n_present += 1
        if n_present <= 1 or m < min_split or (max_depth >= 0 and depth >= max_depth):
            continue
        n_nc = 0
        for f in range(p):
            first = X[idx[0], f]
            for i in range(1, m):
                if X[idx[i], f] != first:
                    nonconst[n_nc] = f
                    n_nc += 1
                    break
        if n_nc == 0:
            continue
        cand = nonconst[:n_nc].copy()
        if n_nc > mtry:
            order = np.argsort(keys[node][cand], kind="mergesort")
            cand = np.sort(cand[order[:mtry]])
        f, thr, dec = _best_split_node(X, y, idx, cand)
        if f < 0:
            continue
        # stable in-place partition of rows[lo:hi]
        nl = 0
        nr = 0
        for i in range(m):
            r = idx[i]
            if X[r, f] < thr:
                scratch[nl] = r
                nl += 1
        for i in range(m):
            r = idx[i]
            if not X[r, f] < thr:
                scratch[nl + nr] = r
                nr += 1
        for i in range(m):
            rows[lo + i] = scratch[i]
        feature[node] = f
        threshold[node] = thr
        decrease[node] = dec
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        # push right first so the left subtree is finished first
        st_node[top] = rchild
        st_lo[top] = lo + nl
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lchild
        st_lo[top] = lo
        st_hi[top] = lo + nl
        st_depth[top] = depth + 1
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
    )


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# ---------------------------------------------------------------- trees


class Split(NamedTuple):
    predictor_index: int
    threshold: float
    gini_decrease: float


@dataclass(frozen=True)
class Leaf:
    level: OccupancyLevel
    class_counts: tuple[int, ...]


@dataclass(frozen=True)
class Internal:
    predictor_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


_TREE_DTYPES = {
    "feature": np.int32, "threshold": np.float64, "left": np.int32,
    "right": np.int32, "counts": np.int32, "decrease": np.float64,
}


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array form of a binary classification tree (node 0 is the root)."""

    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 5) training class counts per node
    decrease: np.ndarray  # Gini decrease of each internal node's split

    def __post_init__(self) -> None:
        # int32 node arrays keep a 200-tree forest small
        for name, dtype in _TREE_DTYPES.items():
            value = np.asarray(getattr(self, name), dtype=dtype)
            object.__setattr__(self, name, _frozen(value))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_class(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def node(self, i: int = 0) -> TreeNode:
        """Nested view of the subtree rooted at node ``i``."""
        if self.feature[i] < 0:
            counts = tuple(int(c) for c in self.counts[i])
            return Leaf(OccupancyLevel(int(np.argmax(self.counts[i]))), counts)
        return Internal(
            int(self.feature[i]),
            float(self.threshold[i]),
            self.node(int(self.left[i])),
            self.node(int(self.right[i])),
        )

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(int(self.left[i])), walk(int(self.right[i])))

        return walk(0)

    def importance(self, n_predictors: int) -> np.ndarray:
        """Per-predictor sum of node-weighted Gini decrease (weights n_node / n_root)."""
        out = np.zeros(n_predictors)
        sizes = self.counts.sum(axis=1)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal], sizes[internal] / sizes[0] * self.decrease[internal])
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "decrease": self.decrease.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int32),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int32),
            np.asarray(d["right"], dtype=np.int32),
            np.asarray(d["counts"], dtype=np.int32).reshape(-1, N_LEVELS),
            np.asarray(d["decrease"], dtype=float),
        )


def _as_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
        raise ValueError("X must be (n, p) and y length n")
    if len(y) == 0:
        raise ValueError("no rows")
    if y.min() < 0 or y.max() >= N_LEVELS:
        raise ValueError("labels must be occupancy level codes 0..4")
    return X, y


def best_split(X, y, candidate_predictors: Sequence[int]) -> Optional[Split]:
    """Best Gini split over the candidates and midpoints between distinct values.

    Returns None when no split decreases impurity.
    """
    X, y = _as_xy(X, y)
    cands = np.array(sorted(set(int(c) for c in candidate_predictors)), dtype=np.int64)
    f, thr, dec = _best_split_node(X, y, np.arange(len(y)), cands)
    if f < 0:
        return None
    return Split(int(f), float(thr), float(dec))


def train_tree(
    X,
    y,
    mtry: int,
    rng: np.random.Generator,
    min_node_size: int = 5,
    max_depth: Optional[int] = None,
) -> Tree:
    X, y = _as_xy(X, y)
    p = X.shape[1]
    if not 1 <= mtry <= max(p, 1):
        raise ValueError(f"mtry must be in [1, {p}]")
    keys = rng.random((2 * len(y) + 1, p))
    arrays = _grow(X, y, keys, int(mtry), int(min_node_size), -1 if max_depth is None else int(max_depth))
    return Tree(*arrays)


# ---------------------------------------------------------------- forests


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    mtry: Optional[int] = None  # default floor(sqrt(p))
    min_node_size: int = 5
    max_depth: Optional[int] = None
    seed: int = 0
    bootstrap: bool = True

    def resolved_mtry(self, p: int) -> int:
        return self.mtry if self.mtry is not None else max(1, math.isqrt(p))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    mtry: int
    predictor_names: tuple[str, ...]
    importance: np.ndarray
    config: ForestConfig
    train_meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _train_one(X, y, i: int, config: ForestConfig, mtry: int) -> Tree:
    rng = derive_rng(config.seed, i)
    if config.bootstrap:
        pick = rng.integers(0, len(y), len(y))
        X, y = X[pick], y[pick]
    return train_tree(X, y, mtry, rng, config.min_node_size, config.max_depth)


def _train_chunk(X, y, indices, config, mtry) -> list[Tree]:
    return [_train_one(X, y, i, config, mtry) for i in indices]


def train_forest(
    X,
    y,
    predictor_names: Sequence[str],
    config: ForestConfig = ForestConfig(),
    train_meta: Optional[Mapping[str, Any]] = None,
    jobs: int = 1,
) -> ForestModel:
    """Bagged forest; tree ``i`` uses the stream ``derive_rng(seed, i)``, so
    the model does not depend on ``jobs``."""
    X, y = _as_xy(X, y)
    p = X.shape[1]
    if len(predictor_names) != p:
        raise ValueError("one predictor name per column required")
    if len(y) < 10:
        raise ValueError(f"need at least 10 training rows, got {len(y)}")
    if config.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if len(np.unique(y)) < 2:
        warnings.warn("training labels have a single class; model predicts it everywhere")
    mtry = config.resolved_mtry(p)
    if jobs > 1 and config.n_trees > 1:
        chunks = [list(range(k, config.n_trees, jobs)) for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_train_chunk, *zip(*[(X, y, c, config, mtry) for c in chunks])))
        by_index = {i: t for c, ts in zip(chunks, parts) for i, t in zip(c, ts)}
        trees = tuple(by_index[i] for i in range(config.n_trees))
    else:
        trees = tuple(_train_one(X, y, i, config, mtry) for i in range(config.n_trees))
    imp = np.mean([t.importance(p) for t in trees], axis=0)
    return ForestModel(
        trees, mtry, tuple(predictor_names), _frozen(imp), config, dict(train_meta or {})
    )


def _matrix(model: ForestModel, rows) -> np.ndarray:
    names = model.predictor_names
    if isinstance(rows, np.ndarray):
        if rows.ndim != 2 or rows.shape[1] != len(names):
            raise ValueError(f"expected an (n, {len(names)}) matrix")
        return np.ascontiguousarray(rows, dtype=float)
    if hasattr(rows, "matrix"):
        try:
            return rows.matrix(names)
        except KeyError as exc:
            raise KeyError(f"missing predictor: {exc.args[0]}") from None
    return np.array([_row_vector(model, r) for r in rows], dtype=float).reshape(-1, len(names))


def _row_vector(model: ForestModel, row) -> list[float]:
    out = []
    for name in model.predictor_names:
        try:
            value = row[name]
        except (KeyError, AttributeError, TypeError):
            value = None
        if value is None:
            raise KeyError(f"missing predictor {name!r}")
        out.append(float(value))
    return out


def vote_counts(model: ForestModel, rows) -> np.ndarray:
    """(n, 5) tree votes per occupancy level."""
    X = _matrix(model, rows)
    votes = np.zeros((len(X), N_LEVELS), dtype=np.int64)
    ar = np.arange(len(X))
    for tree in model.trees:
        np.add.at(votes, (ar, tree.predict_codes(X)), 1)
    return votes


def predict_codes(model: ForestModel, rows) -> np.ndarray:
    return np.argmax(vote_counts(model, rows), axis=1)


def predict_batch(model: ForestModel, rows) -> list[OccupancyLevel]:
    return [OccupancyLevel(int(c)) for c in predict_codes(model, rows)]


def predict(model: ForestModel, row) -> OccupancyLevel:
    X = np.array([_row_vector(model, row)], dtype=float)
    return predict_batch(model, X)[0]


def importance(model: ForestModel) -> dict[str, float]:
    """Mean decrease in Gini per predictor, highest first."""
    pairs = sorted(
        zip(model.predictor_names, model.importance.tolist()),
        key=lambda kv: -kv[1],
    )
    return dict(pairs)


def importance_csv(model: ForestModel) -> str:
    return "predictor,importance\n" + "".join(
        f"{name},{value!r}\n" for name, value in importance(model).items()
    )


# ---------------------------------------------------------------- persistence


def model_to_json(model: ForestModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "predictor_names": list(model.predictor_names),
        "mtry": model.mtry,
        "config": asdict(model.config),
        "train_meta": model.train_meta,
        "importance": model.importance.tolist(),
        "trees": [t.to_dict() for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def model_from_json(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a forest model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return ForestModel(
        tuple(Tree.from_dict(t) for t in doc["trees"]),
        int(doc["mtry"]),
        tuple(doc["predictor_names"]),
        _frozen(np.asarray(doc["importance"], dtype=float)),
        ForestConfig(**doc["config"]),
        doc["train_meta"],
    )


def save_model(model: ForestModel, path: str | os.PathLike) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | os.PathLike) -> ForestModel:
    return model_from_json(Path(path).read_text())
