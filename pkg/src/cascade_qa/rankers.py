"""The two cascade ranking models and top-K / top-N pruning.

Stage one scores whole documents with pointwise logistic regression; stage
two scores paragraphs with second-order gradient-boosted regression trees
under a binary logistic loss.  Both stages keep only a fixed number of
top-scored candidates for the reader.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Document, QaExample
from .features import (
    CorpusStats,
    FeatureSchemaError,
    FeatureVector,
    RELEVANCE_SCHEMA,
    DEFAULT_QTYPES,
    document_tokens,
    paragraph_structural_features,
    prefilter_paragraphs,
    relevance_features,
    stack_features,
    structural_schema,
)

GRAD_NORM_TOL = 1e-6


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(p: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-12
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass
class RankedCandidates:
    """Score-sorted (candidate id, score) pairs with unique ids."""

    items: list[tuple[object, float]]

    def __post_init__(self):
        scores = [s for _, s in self.items]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("scores must be non-increasing")
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique")

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def ids(self) -> list:
        return [i for i, _ in self.items]


# ---------------------------------------------------------------------------
# Pointwise logistic regression (document stage)
# ---------------------------------------------------------------------------


@dataclass
class LinearRankerConfig:
    l2: float = 1e-4
    epochs: int = 500
    step_size: float = 1.0


@dataclass
class LinearRanker:
    """Logistic scorer over standardized features."""

    schema: tuple[str, ...]
    weights: np.ndarray
    bias: float
    means: np.ndarray
    stds: np.ndarray
    loss_curve: list[float] = field(default_factory=list, repr=False)

    def decision(self, x: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x) - self.means) / self.stds
        return z @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision(x))

    def score(self, fv: FeatureVector) -> float:
        if fv.schema != self.schema:
            raise FeatureSchemaError(f"model schema {self.schema} != feature schema {fv.schema}")
        return float(self.predict_proba(fv.values)[0])

    def to_json(self) -> dict:
        return {
            "version": 1,
            "kind": "linear_ranker",
            "schema": list(self.schema),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LinearRanker":
        if data.get("version") != 1 or data.get("kind") != "linear_ranker":
            raise ValueError("not a linear ranker checkpoint")
        return cls(
            schema=tuple(data["schema"]),
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            means=np.asarray(data["means"], dtype=np.float64),
            stds=np.asarray(data["stds"], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "LinearRanker":
        return cls.from_json(json.loads(Path(path).read_text()))


def train_linear_ranker(
    rows: Sequence[tuple[FeatureVector, int]],
    config: LinearRankerConfig = LinearRankerConfig(),
) -> LinearRanker:
    """Fit the logistic document ranker by full-batch gradient descent.

    Features are standardized from the training rows (constant columns get
    unit deviation).  The step is halved whenever it would increase the
    penalized loss, so the recorded loss curve is non-increasing; training
    stops at the epoch cap or once the gradient norm drops below 1e-6.
    """
    if not rows:
        raise ValueError("empty training input")
    x = stack_features([fv for fv, _ in rows])
    y = np.array([label for _, label in rows], dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value")
    if y.min() == y.max():
        raise ValueError("training rows contain a single class")
    schema = rows[0][0].schema

    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds[stds == 0.0] = 1.0
    z = (x - means) / stds

    n, d = z.shape
    w = np.zeros(d)
    b = 0.0

    def penalized_loss(w_, b_):
        p = _sigmoid(z @ w_ + b_)
        return _log_loss(p, y) + 0.5 * config.l2 * float(w_ @ w_)

    step = config.step_size
    loss = penalized_loss(w, b)
    curve = [loss]
    for _ in range(config.epochs):
        p = _sigmoid(z @ w + b)
        grad_w = z.T @ (p - y) / n + config.l2 * w
        grad_b = float(np.mean(p - y))
        gnorm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
        if gnorm < GRAD_NORM_TOL:
            break
        while True:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            new_loss = penalized_loss(w_new, b_new)
            if new_loss <= loss or step < 1e-12:
                break
            step *= 0.5
        if new_loss > loss:
            break
        w, b, loss = w_new, b_new, new_loss
        curve.append(loss)

    return LinearRanker(schema=schema, weights=w, bias=b, means=means, stds=stds, loss_curve=curve)


# ---------------------------------------------------------------------------
# Second-order boosted trees (paragraph stage)
# ---------------------------------------------------------------------------


@dataclass
class TreeBoostConfig:
    rounds: int = 100
    max_depth: int = 4
    shrinkage: float = 0.1
    reg_lambda: float = 1.0
    min_gain: float = 0.0


@dataclass
class TreeNode:
    """Internal split or leaf; leaves have ``weight`` set and no children."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    weight: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.weight is not None


@dataclass
class RegressionTree:
    nodes: list[TreeNode]

    def predict_one(self, x: np.ndarray) -> float:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if x[node.feature] < node.threshold else node.right]
        return node.weight

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)])


@dataclass
class TreeEnsemble:
    """Boosted regression trees scored as ``sigmoid(base + shrinkage * sum)``."""

    schema: tuple[str, ...]
    trees: list[RegressionTree]
    shrinkage: float
    base_score: float = 0.0
    loss_curve: list[float] = field(default_factory=list, repr=False)

    def margin(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.shrinkage * tree.predict(x)
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.margin(x))

    def score(self, fv: FeatureVector) -> float:
        if fv.schema != self.schema:
            raise FeatureSchemaError(f"model schema {self.schema} != feature schema {fv.schema}")
        return float(self.predict_proba(fv.values)[0])

    def to_json(self) -> dict:
        trees = []
        for tree in self.trees:
            nodes = []
            for node in tree.nodes:
                if node.is_leaf:
                    nodes.append({"weight": node.weight})
                else:
                    nodes.append(
                        {"feature": node.feature, "threshold": node.threshold, "left": node.left, "right": node.right}
                    )
            trees.append({"nodes": nodes})
        return {
            "version": 1,
            "kind": "tree_ensemble",
            "schema": list(self.schema),
            "base_score": self.base_score,
            "shrinkage": self.shrinkage,
            "trees": trees,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TreeEnsemble":
        if data.get("version") != 1 or data.get("kind") != "tree_ensemble":
            raise ValueError("not a tree ensemble checkpoint")
        trees = []
        for raw_tree in data["trees"]:
            nodes = []
            for raw in raw_tree["nodes"]:
                if "weight" in raw:
                    nodes.append(TreeNode(weight=float(raw["weight"])))
                else:
                    nodes.append(
                        TreeNode(
                            feature=int(raw["feature"]),
                            threshold=float(raw["threshold"]),
                            left=int(raw["left"]),
                            right=int(raw["right"]),
                        )
                    )
            trees.append(RegressionTree(nodes))
        return cls(
            schema=tuple(data["schema"]),
            trees=trees,
            shrinkage=float(data["shrinkage"]),
            base_score=float(data["base_score"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsemble":
        return cls.from_json(json.loads(Path(path).read_text()))


def split_gain(g_left: float, h_left: float, g_right: float, h_right: float, reg_lambda: float) -> float:
    """Second-order gain of a candidate split (before subtracting min gain)."""
    parent = (g_left + g_right) ** 2 / (h_left + h_right + reg_lambda)
    left = g_left**2 / (h_left + reg_lambda)
    right = g_right**2 / (h_right + reg_lambda)
    return 0.5 * (left + right - parent)


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, config: TreeBoostConfig):
    """Exact greedy search over all features and boundary thresholds.

    Returns ``(gain, feature, threshold)`` or ``None``.  Ties keep the lowest
    feature index and then the lowest threshold.
    """
    n, d = x.shape
    g_total, h_total = float(g.sum()), float(h.sum())
    best = None
    for feat in range(d):
        order = np.argsort(x[:, feat], kind="stable")
        xs = x[order, feat]
        gs = g[order]
        hs = h[order]
        g_left = 0.0
        h_left = 0.0
        for i in range(n - 1):
            g_left += gs[i]
            h_left += hs[i]
            if xs[i] == xs[i + 1]:
                continue
            gain = split_gain(g_left, h_left, g_total - g_left, h_total - h_left, config.reg_lambda) - config.min_gain
            if best is None or gain > best[0]:
                best = (gain, feat, (xs[i] + xs[i + 1]) / 2.0)
    return best


def _grow_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, config: TreeBoostConfig) -> RegressionTree:
    nodes: list[TreeNode] = []

    def build(indices: np.ndarray, depth: int) -> int:
        g_sum, h_sum = float(g[indices].sum()), float(h[indices].sum())
        node_id = len(nodes)
        if depth < config.max_depth and len(indices) > 1:
            found = _best_split(x[indices], g[indices], h[indices], config)
            if found is not None and found[0] > 0.0:
                _, feat, thr = found
                nodes.append(TreeNode(feature=feat, threshold=thr))
                mask = x[indices, feat] < thr
                left_id = build(indices[mask], depth + 1)
                right_id = build(indices[~mask], depth + 1)
                nodes[node_id].left = left_id
                nodes[node_id].right = right_id
                return node_id
        nodes.append(TreeNode(weight=-g_sum / (h_sum + config.reg_lambda)))
        return node_id

    build(np.arange(x.shape[0]), 0)
    return RegressionTree(nodes)


def train_tree_ensemble(
    rows: Sequence[tuple[FeatureVector, int]],
    config: TreeBoostConfig = TreeBoostConfig(),
) -> TreeEnsemble:
    """Boost regression trees on the binary logistic loss.

    Each round fits one tree to the first/second-order statistics
    ``g = p - y`` and ``h = p (1 - p)`` with exact greedy splits; leaves get
    ``-G / (H + lambda)`` and splits with non-positive gain are rejected.
    """
    if not rows:
        raise ValueError("empty training input")
    if config.rounds <= 0:
        raise ValueError("rounds must be positive")
    x = stack_features([fv for fv, _ in rows])
    y = np.array([label for _, label in rows], dtype=np.float64)
    schema = rows[0][0].schema

    margin = np.zeros(x.shape[0])
    trees: list[RegressionTree] = []
    curve = [_log_loss(_sigmoid(margin), y)]
    for _ in range(config.rounds):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        tree = _grow_tree(x, g, h, config)
        trees.append(tree)
        margin += config.shrinkage * tree.predict(x)
        curve.append(_log_loss(_sigmoid(margin), y))

    return TreeEnsemble(schema=schema, trees=trees, shrinkage=config.shrinkage, base_score=0.0, loss_curve=curve)


# ---------------------------------------------------------------------------
# Top-K / top-N pruning
# ---------------------------------------------------------------------------


def document_features(example: QaExample, doc: Document, stats: CorpusStats) -> FeatureVector:
    return relevance_features(example.question, document_tokens(doc), stats, unit_kind="document")


def paragraph_features(
    example: QaExample,
    doc: Document,
    idx: int,
    stats: CorpusStats,
    qtype_vocab: Sequence[str] = DEFAULT_QTYPES,
) -> FeatureVector:
    relevance = relevance_features(example.question, doc.paragraphs[idx].tokens, stats, unit_kind="paragraph")
    structural = paragraph_structural_features(doc, idx, example.question_type, qtype_vocab)
    return relevance.concat(structural)


def paragraph_schema(qtype_vocab: Sequence[str] = DEFAULT_QTYPES) -> tuple[str, ...]:
    return RELEVANCE_SCHEMA + structural_schema(qtype_vocab)


def rank_documents(
    example: QaExample,
    model: LinearRanker,
    stats: CorpusStats,
    k: int = 4,
) -> RankedCandidates:
    """Keep the ``min(k, #docs)`` highest-probability documents.

    Score ties are broken by the document's position in the original
    candidate list.
    """
    scored = []
    for doc in example.documents:
        fv = document_features(example, doc, stats)
        scored.append((doc.doc_id, model.score(fv), doc.source_rank))
    scored.sort(key=lambda item: (-item[1], item[2]))
    return RankedCandidates([(doc_id, score) for doc_id, score, _ in scored[:k]])


def rank_paragraphs(
    example: QaExample,
    ranked_docs: RankedCandidates,
    model: TreeEnsemble,
    stats: CorpusStats,
    n: int = 2,
    qtype_vocab: Sequence[str] = DEFAULT_QTYPES,
) -> dict[str, RankedCandidates]:
    """Within each selected document, keep the top ``n`` retained paragraphs.

    Paragraphs are prefiltered for question overlap first; score ties are
    broken by paragraph index.
    """
    by_id = {doc.doc_id: doc for doc in example.documents}
    out: dict[str, RankedCandidates] = {}
    for doc_id, _ in ranked_docs:
        doc = by_id[doc_id]
        retained = prefilter_paragraphs(example.question, doc)
        scored = []
        for idx in retained:
            fv = paragraph_features(example, doc, idx, stats, qtype_vocab)
            scored.append((idx, model.score(fv)))
        scored.sort(key=lambda item: (-item[1], item[0]))
        out[doc_id] = RankedCandidates(scored[:n])
    return out
