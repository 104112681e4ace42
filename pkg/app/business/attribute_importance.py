import math
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from app.business.predictor import FOREST, LLM, LOGREG, TREE, check_signature, require_both_classes
from app.business.logistic_regression import LogisticParameters
from app.errors import ModelError, WeightFileError

logger = logging.getLogger(__name__)

PERMUTATION, COEFFICIENTS, IMPURITY, EXTERNAL = 'permutation', 'coefficients', 'impurity', 'external'


@dataclass(frozen=True, eq=False)
class WeightVector:
    """与列签名对齐的属性权重"""
    weights: np.ndarray
    column_names: tuple
    source: str
    seed: int | None = None
    repeats: int | None = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.size != len(self.column_names):
            raise WeightFileError(
                f"weight vector has {weights.size} entries for {len(self.column_names)} columns")
        if not np.all(np.isfinite(weights)):
            raise WeightFileError("weight vector contains non-finite values")
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'column_names', tuple(self.column_names))

    def magnitudes(self):
        return np.abs(self.weights)


def excluded_value_draw(column, rng):
    """
    每行从该列的其他取值中均匀抽取一个替换值 (排除当前值)
    只有一个取值的列保持不变
    """
    column = np.asarray(column, dtype=float)
    distinct = np.unique(column)
    if distinct.size < 2:
        return column.copy()
    current = np.searchsorted(distinct, column)
    draw = rng.integers(0, distinct.size - 1, size=column.size)
    draw = draw + (draw >= current)
    return distinct[draw]


def _error(labels, scores, loss):
    mse = float(np.mean((labels - scores) ** 2))
    return math.sqrt(mse) if loss == 'rmse' else mse


def permutation_importance(predictor, m, labels=None, seed=0, repeats=1, loss='mse'):
    """
    逐列置换后预测误差 (MSE) 的变化量, 每列种子为 seed + 列号
    repeats 次独立置换取平均
    """
    check_signature(predictor, m)
    if repeats < 1:
        raise ModelError("repeats must be at least 1")
    if loss not in ('mse', 'rmse'):
        raise ModelError(f"unknown loss {loss!r}")
    labels = m.labels if labels is None else np.asarray(labels)
    require_both_classes(labels, "permutation importance")
    labels = labels.astype(float)

    base_error = _error(labels, predictor.predict_proba(m), loss)
    weights = np.zeros(m.n_columns)
    for i in range(m.n_columns):
        column = m.rows[:, i]
        if np.unique(column).size < 2:
            continue
        rng = np.random.default_rng(seed + i)
        effects = []
        for _ in range(repeats):
            rows = m.rows.copy()
            rows[:, i] = excluded_value_draw(column, rng)
            permuted = predictor.predict_proba(m.with_rows(rows))
            effects.append(_error(labels, permuted, loss) - base_error)
        weights[i] = float(np.mean(effects))
    logger.info(f"Permutation importance over {m.n_columns} columns, {repeats} repeat(s)")
    return WeightVector(weights=weights, column_names=m.column_names, source=PERMUTATION,
                        seed=seed, repeats=repeats)


def coefficient_weights(model):
    """logreg: |系数|; llm: 各叶节点 |系数| 按训练样本数加权平均, 常数叶节点计为 0"""
    if model.kind == LOGREG:
        weights = np.abs(model.parameters.coefficients)
    elif model.kind == LLM:
        weights = np.zeros(len(model.column_names))
        support = model.parameters.leaf_support()
        total = sum(support.values())
        for node, leaf_model in model.parameters.leaf_models.items():
            if isinstance(leaf_model, LogisticParameters):
                weights += support[node] * np.abs(leaf_model.coefficients)
        weights = weights / total
    else:
        raise ModelError(f"coefficient weights need a logreg or llm model, got {model.kind}")
    return WeightVector(weights=weights, column_names=model.column_names, source=COEFFICIENTS)


def impurity_weights(model):
    if model.kind not in (TREE, FOREST):
        raise ModelError(f"impurity weights need a tree or forest model, got {model.kind}")
    weights = model.parameters.impurity_weights(len(model.column_names))
    return WeightVector(weights=weights, column_names=model.column_names, source=IMPURITY)


def model_weights(model):
    """内在权重来源: 线性模型取系数, 树模型取不纯度下降"""
    if model.kind in (LOGREG, LLM):
        return coefficient_weights(model)
    return impurity_weights(model)


def load_external_weights(path, signature):
    """
    读取外部权重文件 (UTF-8 CSV, 表头 attribute,weight), 按列名对齐
    文件中缺少的签名列记为 0 并告警
    """
    signature = tuple(signature)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding='utf-8')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise WeightFileError(f"malformed weight file {path}: {e}") from e
    if list(frame.columns) != ['attribute', 'weight']:
        raise WeightFileError(f"weight file {path} needs the header attribute,weight")

    position = {name: i for i, name in enumerate(signature)}
    weights = np.zeros(len(signature))
    seen = set()
    for line, (attribute, raw) in enumerate(zip(frame['attribute'], frame['weight']), start=2):
        if attribute not in position:
            raise WeightFileError(f"line {line}: unknown column {attribute!r}")
        if attribute in seen:
            raise WeightFileError(f"line {line}: duplicate column {attribute!r}")
        try:
            value = float(raw)
        except ValueError:
            raise WeightFileError(f"line {line}: malformed weight {raw!r}")
        if not math.isfinite(value):
            raise WeightFileError(f"line {line}: non-finite weight for {attribute!r}")
        weights[position[attribute]] = abs(value)
        seen.add(attribute)

    missing = [name for name in signature if name not in seen]
    if missing:
        logger.warning(f"Weight file {path} lacks {len(missing)} signature column(s), set to 0")
    return WeightVector(weights=weights, column_names=signature, source=EXTERNAL)
