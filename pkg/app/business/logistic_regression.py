import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from app.business.predictor import LOGREG, Scaler, finish_training, require_both_classes
from app.errors import ModelError
from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LogisticParameters:
    """系数定义在标准化后的空间上, 截距不参与正则"""
    coefficients: np.ndarray
    intercept: float
    scaler: Scaler
    iterations: int
    converged: bool

    def predict(self, rows):
        return expit(self.scaler.transform(rows) @ self.coefficients + self.intercept)

    def describe(self, column_names):
        lines = [f"intercept = {self.intercept!r}",
                 "# coefficient<TAB>column<TAB>coefficient<TAB>mean<TAB>scale"]
        for name, coef, mean, scale in zip(column_names, self.coefficients,
                                           self.scaler.means, self.scaler.scales):
            lines.append(f"coefficient\t{name}\t{float(coef)!r}\t{float(mean)!r}\t{float(scale)!r}")
        return lines


def _loss(X, y, w, b, l2):
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def fit_logistic(rows, labels, l2, max_iter, tol, learning_rate=0.1):
    """
    全批量梯度下降, 固定学习率, 损失上升时学习率减半并重试
    损失变化小于 tol 或达到 max_iter 时停止
    """
    scaler = Scaler.fit(rows)
    X = scaler.transform(rows)
    y = np.asarray(labels, dtype=float)
    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    loss = _loss(X, y, w, b, l2)
    rate = learning_rate
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        residual = expit(X @ w + b) - y
        grad_w = X.T @ residual / n + l2 * w
        grad_b = float(residual.mean())
        while True:
            candidate_w = w - rate * grad_w
            candidate_b = b - rate * grad_b
            candidate_loss = _loss(X, y, candidate_w, candidate_b, l2)
            if candidate_loss <= loss or rate < 1e-12:
                break
            rate /= 2.0
        if candidate_loss > loss:
            # 步长已无法再降低损失, 停在最后接受的点
            converged = True
            break
        change = loss - candidate_loss
        w, b, loss = candidate_w, candidate_b, candidate_loss
        if abs(change) < tol:
            converged = True
            break
    return LogisticParameters(coefficients=w, intercept=b, scaler=scaler,
                              iterations=iteration, converged=converged)


def logreg_hyper(hyper=None):
    merged = dict(Config.LOGREG_DEFAULTS)
    merged.update(hyper or {})
    if merged['l2'] < 0:
        raise ModelError("l2 must be nonnegative")
    return merged


def train_logreg(m, hyper=None):
    hyper = logreg_hyper(hyper)
    if m.n_rows < 2:
        raise ModelError("logistic regression needs at least 2 rows")
    require_both_classes(m.labels, "logistic regression")
    parameters = fit_logistic(m.rows, m.labels, l2=float(hyper['l2']), max_iter=int(hyper['max_iter']),
                              tol=float(hyper['tol']), learning_rate=float(hyper['learning_rate']))
    if not parameters.converged:
        logger.info(f"Logistic regression stopped at max_iter={hyper['max_iter']}")
    return finish_training(LOGREG, parameters, m, hyper)
