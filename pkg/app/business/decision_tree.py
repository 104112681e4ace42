import math
import logging
from dataclasses import dataclass

import numpy as np

from app.business.predictor import FOREST, TREE, finish_training
from app.errors import ModelError
from config import Config

logger = logging.getLogger(__name__)

LEAF = -1
GAIN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class TreeParameters:
    """扁平数组表示的 CART 树, 节点 0 为根, 左子树对应 x <= threshold"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    decrease: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def leaves(self):
        return [node for node in range(self.n_nodes) if self.feature[node] == LEAF]

    def apply(self, rows):
        """每行落入的叶节点编号"""
        rows = np.asarray(rows, dtype=float)
        nodes = np.zeros(rows.shape[0], dtype=int)
        active = self.feature[nodes] != LEAF
        while active.any():
            current = nodes[active]
            go_left = rows[active, self.feature[current]] <= self.threshold[current]
            nodes[active] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[nodes] != LEAF
        return nodes

    def predict(self, rows):
        return self.value[self.apply(rows)]

    def impurity_weights(self, n_columns):
        """每列的加权 Gini 下降量之和, 权重为节点样本占比"""
        weights = np.zeros(n_columns)
        total = self.n_samples[0]
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                weights[self.feature[node]] += self.n_samples[node] / total * self.decrease[node]
        return weights

    def describe(self, column_names, indent=0):
        lines = []

        def walk(node, depth):
            pad = '  ' * (indent + depth)
            stats = (f"samples={int(self.n_samples[node])} impurity={float(self.impurity[node])!r} "
                     f"probability={float(self.value[node])!r}")
            if self.feature[node] == LEAF:
                lines.append(f"{pad}leaf node={node} {stats}")
                return
            column = int(self.feature[node])
            lines.append(f"{pad}split node={node} column={column_names[column]} index={column} "
                         f"threshold={float(self.threshold[node])!r} {stats}")
            walk(int(self.left[node]), depth + 1)
            walk(int(self.right[node]), depth + 1)

        walk(0, 0)
        return lines


def gini(positives, total):
    if total == 0:
        return 0.0
    share = positives / total
    return 1.0 - share ** 2 - (1.0 - share) ** 2


def best_split(rows, labels, columns, min_samples_leaf):
    """
    在给定列上搜索 Gini 下降最大的切分点 (相邻不同取值的中点)
    并列时取列号最小者, 再取阈值最小者
    返回 (下降量, 列号, 阈值) 或 None
    """
    n = len(labels)
    total_pos = float(labels.sum())
    parent = gini(total_pos, n)
    best = None
    for column in columns:
        x = rows[:, column]
        order = np.argsort(x, kind='stable')
        xs = x[order]
        left_pos = np.cumsum(labels[order])[:-1].astype(float)
        left_n = np.arange(1, n, dtype=float)
        right_n = n - left_n
        valid = (xs[:-1] < xs[1:]) & (left_n >= min_samples_leaf) & (right_n >= min_samples_leaf)
        if not valid.any():
            continue
        left_share = left_pos / left_n
        right_share = (total_pos - left_pos) / right_n
        left_gini = 1.0 - left_share ** 2 - (1.0 - left_share) ** 2
        right_gini = 1.0 - right_share ** 2 - (1.0 - right_share) ** 2
        gains = parent - (left_n * left_gini + right_n * right_gini) / n
        gains[~valid] = -np.inf
        i = int(np.argmax(gains))
        threshold = (xs[i] + xs[i + 1]) / 2.0
        if threshold >= xs[i + 1]:
            threshold = xs[i]
        if best is None or gains[i] > best[0] + GAIN_TOLERANCE:
            best = (float(gains[i]), int(column), float(threshold))
    return best


class _TreeBuilder:
    def __init__(self, rows, labels, max_depth, min_samples_leaf, rng=None, max_features=None,
                 force_root_split=False):
        self.rows = np.asarray(rows, dtype=float)
        self.labels = np.asarray(labels, dtype=int)
        self.max_depth = max_depth
        self.min_samples_leaf = max(1, int(min_samples_leaf))
        self.rng = rng
        self.max_features = max_features
        self.force_root_split = force_root_split
        self.nodes = []

    def _candidate_columns(self):
        p = self.rows.shape[1]
        if self.max_features is None or self.max_features >= p:
            return range(p)
        return np.sort(self.rng.choice(p, size=self.max_features, replace=False))

    def _add(self, indices):
        y = self.labels[indices]
        positives = float(y.sum())
        self.nodes.append({'feature': LEAF, 'threshold': 0.0, 'left': LEAF, 'right': LEAF,
                           'value': positives / len(y), 'n_samples': len(y),
                           'impurity': gini(positives, len(y)), 'decrease': 0.0})
        return len(self.nodes) - 1

    def grow(self, indices, depth=0):
        node = self._add(indices)
        record = self.nodes[node]
        forced = self.force_root_split and depth == 0
        n = len(indices)
        if depth >= self.max_depth or n < 2 * self.min_samples_leaf:
            return node
        if record['impurity'] == 0.0 and not forced:
            return node
        columns = self._candidate_columns()
        if len(columns) == 0:
            return node
        split = best_split(self.rows[indices], self.labels[indices], columns, self.min_samples_leaf)
        if split is None or (split[0] <= GAIN_TOLERANCE and not forced):
            return node
        decrease, column, threshold = split
        go_left = self.rows[indices, column] <= threshold
        record.update(feature=column, threshold=threshold, decrease=max(decrease, 0.0))
        record['left'] = self.grow(indices[go_left], depth + 1)
        record['right'] = self.grow(indices[~go_left], depth + 1)
        return node

    def build(self):
        if self.rows.shape[0] == 0:
            raise ModelError("tree training needs at least one row")
        self.grow(np.arange(self.rows.shape[0]))
        fields = {key: np.array([node[key] for node in self.nodes])
                  for key in ('feature', 'threshold', 'left', 'right', 'value',
                              'n_samples', 'impurity', 'decrease')}
        for key in ('feature', 'left', 'right', 'n_samples'):
            fields[key] = fields[key].astype(int)
        return TreeParameters(**fields)


def build_tree(rows, labels, max_depth, min_samples_leaf, rng=None, max_features=None,
               force_root_split=False):
    builder = _TreeBuilder(rows, labels, max_depth, min_samples_leaf, rng=rng,
                           max_features=max_features, force_root_split=force_root_split)
    return builder.build()


@dataclass(frozen=True, eq=False)
class ForestParameters:
    trees: tuple

    def predict(self, rows):
        return np.mean([tree.predict(rows) for tree in self.trees], axis=0)

    def impurity_weights(self, n_columns):
        return np.mean([tree.impurity_weights(n_columns) for tree in self.trees], axis=0)

    def describe(self, column_names):
        lines = []
        for index, tree in enumerate(self.trees):
            lines.append(f"tree {index}")
            lines.extend(tree.describe(column_names, indent=1))
        return lines


def bootstrap_indices(n, rng):
    return rng.integers(0, n, size=n)


def _merge(defaults, hyper):
    merged = dict(defaults)
    merged.update(hyper or {})
    return merged


def train_tree(m, hyper=None):
    hyper = _merge(Config.TREE_DEFAULTS, hyper)
    parameters = build_tree(m.rows, m.labels, max_depth=int(hyper['max_depth']),
                            min_samples_leaf=int(hyper['min_samples_leaf']))
    return finish_training(TREE, parameters, m, hyper)


def train_forest(m, hyper=None):
    """
    每棵树独立种子 seed + 树序号, 行自助采样, 每次切分抽取 ceil(fraction * p) 列
    """
    hyper = _merge(Config.FOREST_DEFAULTS, hyper)
    n_trees = int(hyper['n_trees'])
    if n_trees < 1:
        raise ModelError("forest needs at least one tree")
    if m.n_rows == 0:
        raise ModelError("forest training needs at least one row")
    fraction = float(hyper['max_features_fraction'])
    if not 0.0 < fraction <= 1.0:
        raise ModelError("max_features_fraction must lie in (0, 1]")
    max_features = math.ceil(round(fraction * m.n_columns, 9))
    seed = int(hyper['seed'])
    trees = []
    for index in range(n_trees):
        rng = np.random.default_rng(seed + index)
        sample = bootstrap_indices(m.n_rows, rng)
        trees.append(build_tree(m.rows[sample], m.labels[sample],
                                max_depth=int(hyper['max_depth']),
                                min_samples_leaf=int(hyper['min_samples_leaf']),
                                rng=rng, max_features=max_features))
    return finish_training(FOREST, ForestParameters(trees=tuple(trees)), m, hyper)
