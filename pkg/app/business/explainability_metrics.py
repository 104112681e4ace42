import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from app.business.attribute_importance import WeightVector, excluded_value_draw
from app.business.predictor import binarize, check_signature
from app.business.preprocessing import ATTRIBUTE_TYPES, CASE, CONTROL, EVENT
from app.errors import DegenerateRankingError, MetricError, UndefinedMetricError
from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TypedMetric:
    """按属性类型拆分的指标值, 缺失类型为 None"""
    control: float | None
    case: float | None
    event: float | None
    total: float | None

    def get(self, attribute_type):
        return getattr(self, attribute_type)


@dataclass
class MetricsReport:
    """
    一个 (日志, 模型) 单元的评估结果
    excluded_reason 非空时 XAI 字段为 None
    """
    log: str
    model: str
    auc: float | None = None
    parsimony: TypedMetric | None = None
    fc: TypedMetric | None = None
    irc: float | None = None
    lod_at_10: float | None = None
    seed: int | None = None
    started_at: str | None = None
    finished_at: str | None = None
    excluded_reason: str = ''
    provenance: dict = field(default_factory=dict)

    @property
    def included(self):
        return not self.excluded_reason


def _magnitudes(w):
    if isinstance(w, WeightVector):
        return w.magnitudes()
    return np.abs(np.asarray(w, dtype=float))


def _types(columns):
    types = [getattr(meta, 'attribute_type', meta) for meta in columns]
    unknown = sorted({t for t in types if t not in ATTRIBUTE_TYPES})
    if unknown:
        raise MetricError(f"unknown attribute type(s): {', '.join(map(str, unknown))}")
    return types


def parsimony(w, columns, eps=None):
    """C_t: 类型 t 中 |w_i| > eps 的列数, total 为三者之和"""
    eps = Config.PARSIMONY_EPS if eps is None else eps
    magnitudes = _magnitudes(w)
    types = _types(columns)
    if magnitudes.size != len(types):
        raise MetricError(f"weight vector has {magnitudes.size} entries for {len(types)} columns")
    counts = {t: 0 for t in ATTRIBUTE_TYPES}
    for value, attribute_type in zip(magnitudes, types):
        if value > eps:
            counts[attribute_type] += 1
    return TypedMetric(control=counts[CONTROL], case=counts[CASE], event=counts[EVENT],
                       total=counts[CONTROL] + counts[CASE] + counts[EVENT])


def parsimony_fraction(w, columns, eps=None):
    counts = parsimony(w, columns, eps)
    types = _types(columns)
    sizes = {t: types.count(t) for t in ATTRIBUTE_TYPES}

    def share(attribute_type):
        if sizes[attribute_type] == 0:
            return None
        return counts.get(attribute_type) / sizes[attribute_type]

    total = counts.total / len(types) if types else None
    return TypedMetric(control=share(CONTROL), case=share(CASE), event=share(EVENT), total=total)


def functional_complexity(predictor, m, attribute_type, seed, threshold=None):
    """
    同时置换某一类型的全部列, 统计二值化预测改变的行占比
    """
    check_signature(predictor, m)
    if attribute_type not in ATTRIBUTE_TYPES:
        raise MetricError(f"unknown attribute type {attribute_type!r}")
    indices = m.indices_of(attribute_type)
    if not indices:
        raise UndefinedMetricError(f"no {attribute_type} columns: functional complexity undefined")
    if m.n_rows == 0:
        raise UndefinedMetricError("functional complexity undefined on an empty matrix")

    rng = np.random.default_rng(seed)
    rows = m.rows.copy()
    for i in indices:
        rows[:, i] = excluded_value_draw(m.rows[:, i], rng)
    original = binarize(predictor.predict_proba(m), threshold)
    permuted = binarize(predictor.predict_proba(m.with_rows(rows)), threshold)
    return float(np.count_nonzero(original != permuted)) / m.n_rows


def functional_complexity_by_type(predictor, m, seed, threshold=None):
    """三种类型依次使用 seed + 类型序号; 没有该类型列时为 None, total 取已定义值的均值"""
    values = {}
    for ordinal, attribute_type in enumerate(ATTRIBUTE_TYPES):
        try:
            values[attribute_type] = functional_complexity(predictor, m, attribute_type,
                                                           seed + ordinal, threshold)
        except UndefinedMetricError as e:
            logger.info(f"FC skipped: {e}")
            values[attribute_type] = None
    defined = [value for value in values.values() if value is not None]
    total = float(np.mean(defined)) if defined else None
    return TypedMetric(control=values[CONTROL], case=values[CASE], event=values[EVENT], total=total)


def spearman(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise MetricError(f"spearman needs equal lengths, got {a.size} and {b.size}")
    if a.size < 2:
        raise MetricError("spearman needs at least 2 values")
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        raise DegenerateRankingError("degenerate ranking: constant vector")
    ra = rankdata(a, method='average')
    rb = rankdata(b, method='average')
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(ra @ rb / math.sqrt(float(ra @ ra) * float(rb @ rb)))
    return min(1.0, max(-1.0, rho))


def irc(w_pi, w_e):
    """IRC: 置换重要性与解释模型权重的秩相关, 不区分属性类型"""
    if isinstance(w_pi, WeightVector) and isinstance(w_e, WeightVector):
        if w_pi.column_names != w_e.column_names:
            raise MetricError("irc needs weight vectors over the same column signature")
    return spearman(_magnitudes(w_pi), _magnitudes(w_e))


def top_k_type_counts(w, columns, k=None):
    """取 |w| 最大的 k 列 (并列时列号小者优先), 返回 (control, case, event) 计数"""
    k = Config.TOP_K if k is None else k
    if k < 1:
        raise MetricError("k must be at least 1")
    magnitudes = _magnitudes(w)
    types = _types(columns)
    if magnitudes.size != len(types):
        raise MetricError(f"weight vector has {magnitudes.size} entries for {len(types)} columns")
    order = np.argsort(-magnitudes, kind='stable')[:k]
    chosen = [types[i] for i in order]
    return tuple(chosen.count(t) for t in ATTRIBUTE_TYPES)


def lod_at_k(w_pi, w_e, columns, k=None):
    if isinstance(w_pi, WeightVector) and isinstance(w_e, WeightVector):
        if w_pi.column_names != w_e.column_names:
            raise MetricError("lod needs weight vectors over the same column signature")
    counts_pi = np.array(top_k_type_counts(w_pi, columns, k), dtype=float)
    counts_e = np.array(top_k_type_counts(w_e, columns, k), dtype=float)
    return float(np.linalg.norm(counts_pi - counts_e))
