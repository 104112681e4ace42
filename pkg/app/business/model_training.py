import logging
import itertools

from app.business.decision_tree import train_forest, train_tree
from app.business.logistic_regression import train_logreg
from app.business.logit_leaf_model import train_llm
from app.business.predictor import FOREST, LLM, LOGREG, TREE, auc
from app.business.preprocessing import aggregate_encode, extract_prefixes, fit_vocabulary, temporal_split
from app.errors import ModelError, XmopError

logger = logging.getLogger(__name__)

TRAINERS = {
    LOGREG: train_logreg,
    TREE: train_tree,
    FOREST: train_forest,
    LLM: train_llm,
}


def train_model(kind, m, hyper=None):
    if kind not in TRAINERS:
        raise ModelError(f"unknown built-in model kind {kind!r}")
    return TRAINERS[kind](m, hyper)


def expand_grid(grid):
    """按声明顺序展开超参数网格"""
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[key] for key in keys))]


def grid_search(kind, train_log, max_prefix, grid, hyper=None, holdout_ratio=0.8):
    """
    在训练日志内部再做一次时间切分, 以留出集 AUC 选择网格点
    AUC 相同时取声明顺序靠前的网格点
    """
    hyper = dict(hyper or {})
    fit_part, holdout = temporal_split(train_log, holdout_ratio)
    vocab = fit_vocabulary(fit_part)
    m_fit = aggregate_encode(extract_prefixes(fit_part, max_prefix), train_log.schema, vocab)
    m_holdout = aggregate_encode(extract_prefixes(holdout, max_prefix), train_log.schema, vocab)

    best = None
    for point in expand_grid(grid):
        candidate = {**hyper, **point}
        try:
            model = train_model(kind, m_fit, candidate)
            score = auc(m_holdout.labels, model.predict_proba(m_holdout))
        except XmopError as e:
            logger.warning(f"Grid point {point} for {kind} failed: {e}")
            continue
        logger.info(f"Grid point {point} for {kind}: holdout AUC={score:.4f}")
        if best is None or score > best[0]:
            best = (score, candidate)
    if best is None:
        raise ModelError(f"grid search for {kind} found no trainable configuration")
    return best[1]
