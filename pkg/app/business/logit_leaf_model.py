import logging
from dataclasses import dataclass

import numpy as np

from app.business.decision_tree import build_tree
from app.business.logistic_regression import fit_logistic
from app.business.predictor import LLM, finish_training, require_both_classes
from app.errors import ModelError
from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConstantLeaf:
    """单一类别的叶节点, 概率固定为 0 或 1"""
    probability: float

    def predict(self, rows):
        return np.full(np.asarray(rows).shape[0], self.probability)

    def describe(self, column_names):
        return [f"constant = {self.probability!r}"]


@dataclass(frozen=True, eq=False)
class LogitLeafParameters:
    tree: object
    leaf_models: dict

    def predict(self, rows):
        rows = np.asarray(rows, dtype=float)
        leaves = self.tree.apply(rows)
        scores = np.zeros(rows.shape[0])
        for node, model in self.leaf_models.items():
            routed = leaves == node
            if routed.any():
                scores[routed] = model.predict(rows[routed])
        return scores

    def leaf_support(self):
        return {node: int(self.tree.n_samples[node]) for node in self.leaf_models}

    def describe(self, column_names):
        lines = ["# segmentation tree"]
        lines.extend(self.tree.describe(column_names))
        for node, model in self.leaf_models.items():
            lines.append(f"leaf_model node={node} support={int(self.tree.n_samples[node])}")
            lines.extend(f"  {line}" for line in model.describe(column_names))
        return lines


def train_llm(m, hyper=None):
    """
    先用 CART 分段 (根节点强制切分), 再在每个叶节点上独立拟合 L2 逻辑回归
    """
    merged = dict(Config.LLM_DEFAULTS)
    merged.update(hyper or {})
    min_leaf = int(merged['min_samples_leaf'])
    require_both_classes(m.labels, "logit leaf model")
    if m.n_rows < 2 * min_leaf:
        raise ModelError(f"logit leaf model needs at least {2 * min_leaf} rows for a forced split")

    tree = build_tree(m.rows, m.labels, max_depth=max(1, int(merged['max_depth'])),
                      min_samples_leaf=min_leaf, force_root_split=True)
    if len(tree.leaves) < 2:
        raise ModelError("no legal forced split: every column is constant")

    leaves = tree.apply(m.rows)
    leaf_models = {}
    for node in tree.leaves:
        routed = leaves == node
        labels = m.labels[routed]
        if np.unique(labels).size < 2:
            leaf_models[node] = ConstantLeaf(probability=float(labels[0]))
            continue
        leaf_models[node] = fit_logistic(m.rows[routed], labels, l2=float(merged['l2']),
                                         max_iter=int(merged['max_iter']), tol=float(merged['tol']),
                                         learning_rate=float(merged['learning_rate']))
    logger.info(f"Logit leaf model: {len(leaf_models)} leaves")
    return finish_training(LLM, LogitLeafParameters(tree=tree, leaf_models=leaf_models), m, merged)
