import logging
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.stats import rankdata

from app.errors import ModelError, SignatureMismatchError
from config import Config

logger = logging.getLogger(__name__)

LOGREG, TREE, FOREST, LLM, EXTERNAL = 'logreg', 'tree', 'forest', 'llm', 'external'
MODEL_KINDS = (LOGREG, TREE, FOREST, LLM, EXTERNAL)


@runtime_checkable
class Predictor(Protocol):
    """任务模型 F 的行为契约"""
    column_names: tuple

    def predict_proba(self, matrix) -> np.ndarray:
        ...


def check_signature(predictor, matrix):
    if tuple(predictor.column_names) != tuple(matrix.column_names):
        expected, got = len(predictor.column_names), matrix.n_columns
        raise SignatureMismatchError(
            f"column signature mismatch: predictor has {expected} columns, matrix has {got}")


@dataclass(frozen=True, eq=False)
class Scaler:
    """z-score 标准化, 标准差为 0 的列按 1 缩放"""
    means: np.ndarray
    scales: np.ndarray

    @classmethod
    def fit(cls, rows):
        rows = np.asarray(rows, dtype=float)
        if rows.shape[0] == 0:
            return cls(means=np.zeros(rows.shape[1]), scales=np.ones(rows.shape[1]))
        scales = rows.std(axis=0)
        scales[scales == 0.0] = 1.0
        return cls(means=rows.mean(axis=0), scales=scales)

    def transform(self, rows):
        return (np.asarray(rows, dtype=float) - self.means) / self.scales


@dataclass(frozen=True, eq=False)
class FunctionPredictor:
    """把普通函数 rows -> 概率 包装成 Predictor"""
    column_names: tuple
    function: object

    def predict_proba(self, matrix):
        check_signature(self, matrix)
        return np.asarray(self.function(matrix.rows), dtype=float).reshape(matrix.n_rows)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    parameters: object
    scaler: Scaler
    column_names: tuple
    hyper: dict = field(default_factory=dict)
    training_auc: float | None = None

    def predict_proba(self, matrix):
        check_signature(self, matrix)
        if matrix.n_rows == 0:
            return np.zeros(0)
        scores = self.parameters.predict(matrix.rows)
        return np.clip(scores, 0.0, 1.0)


def predict_proba(model, matrix):
    return model.predict_proba(matrix)


def require_both_classes(labels, what):
    labels = np.asarray(labels)
    if labels.size == 0 or np.unique(labels).size < 2:
        raise ModelError(f"{what} needs both classes present (single-class labels)")


def auc(labels, scores):
    """
    Mann-Whitney 形式的 AUC, 并列分数取平均秩 (正负样本并列计 0.5)
    """
    labels = np.asarray(labels, dtype=int)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise ModelError(f"labels and scores differ in length ({labels.size} vs {scores.size})")
    require_both_classes(labels, "AUC")
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores, method='average')
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def binarize(scores, threshold=None):
    threshold = Config.THRESHOLD if threshold is None else threshold
    return (np.asarray(scores, dtype=float) >= threshold).astype(int)


def finish_training(kind, parameters, matrix, hyper):
    """装配 TrainedModel 并记录训练集 AUC"""
    training_auc = None
    if matrix.n_rows and np.unique(matrix.labels).size == 2:
        training_auc = auc(matrix.labels, np.clip(parameters.predict(matrix.rows), 0.0, 1.0))
    model = TrainedModel(kind=kind, parameters=parameters, scaler=Scaler.fit(matrix.rows),
                         column_names=matrix.column_names, hyper=dict(hyper),
                         training_auc=training_auc)
    logger.info(f"Trained {kind} on {matrix.n_rows} rows x {matrix.n_columns} columns, "
                f"training AUC={training_auc}")
    return model


def export_model(model):
    """纯文本参数导出"""
    lines = [f"kind = {model.kind}"]
    lines.extend(f"hyper.{key} = {value!r}" for key, value in sorted(model.hyper.items()))
    if model.training_auc is not None:
        lines.append(f"training_auc = {model.training_auc!r}")
    lines.extend(model.parameters.describe(model.column_names))
    return '\n'.join(lines) + '\n'
