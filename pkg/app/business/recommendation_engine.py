import logging
from dataclasses import dataclass, field, fields

import click

from app.errors import ConfigError

logger = logging.getLogger(__name__)

GLRM, CNN, LSTM, XGB, RF, LLM, LR = 'GLRM', 'CNN', 'LSTM', 'XGB', 'RF', 'LLM', 'LR'
MODEL_LABELS = (GLRM, CNN, LSTM, XGB, RF, LLM, LR)
IMPLEMENTED = {RF, LLM, LR}

GOOD, POOR, NEUTRAL = 'tends-good', 'tends-poor', 'neutral'

DISCLAIMER = "These guidelines should not be taken strictly: they summarise benchmark tendencies."

# 问题文本, 顺序即提问顺序
QUESTIONS = {
    'explainability_over_performance': "Is explainability a lot more important than predictive performance?",
    'parsimony_very_important': "Is parsimony very important?",
    'irc_unimportant': "Is the metric IRC unimportant?",
    'faithfulness_important': "Is faithfulness important?",
    'parsimony_unimportant': "Is parsimony unimportant?",
    'lod_low_required': "Is a low value for LOD required?",
    'data_heterogeneous': "Is the data heterogeneous?",
}

# 各模型在 AUC / 简约性 / 忠实性 (FC, IRC) / LOD 上的表现倾向
METRIC_PROFILES = {
    GLRM: {'auc': NEUTRAL, 'parsimony': GOOD, 'functional_complexity': GOOD, 'irc': GOOD, 'lod': GOOD},
    CNN: {'auc': NEUTRAL, 'parsimony': GOOD, 'functional_complexity': NEUTRAL, 'irc': POOR, 'lod': NEUTRAL},
    LSTM: {'auc': NEUTRAL, 'parsimony': GOOD, 'functional_complexity': NEUTRAL, 'irc': NEUTRAL, 'lod': NEUTRAL},
    XGB: {'auc': GOOD, 'parsimony': NEUTRAL, 'functional_complexity': NEUTRAL, 'irc': GOOD, 'lod': GOOD},
    RF: {'auc': GOOD, 'parsimony': POOR, 'functional_complexity': POOR, 'irc': POOR, 'lod': POOR},
    LLM: {'auc': GOOD, 'parsimony': NEUTRAL, 'functional_complexity': NEUTRAL, 'irc': POOR, 'lod': POOR},
    LR: {'auc': GOOD, 'parsimony': GOOD, 'functional_complexity': NEUTRAL, 'irc': POOR, 'lod': POOR},
}

RATIONALES = {
    GLRM: "Explainability outweighs predictive performance: GLRM keeps few attributes and "
          "stays faithful while its AUC remains reasonable.",
    CNN: "Parsimony is very important and IRC is not: CNN is preferred over LSTM.",
    LSTM: "Parsimony is very important and IRC matters: LSTM ranks attributes more faithfully than CNN.",
    XGB: "Faithfulness is important: XGB combines a high AUC with good faithfulness.",
    RF: "Parsimony is unimportant: RF is recommended when models may use all the attributes.",
    LLM: "The data is heterogeneous: LLM is preferred over LR because it segments the data first.",
    LR: "No stronger requirement applies: LR offers a high AUC with a simple parsimonious model.",
}

XGB_LOD_RATIONALE = "A low LOD is required: XGB keeps the attribute-type distribution of its explanation close to the task model."
GLRM_NOTE = "Note: GLRM is more faithful still, at the cost of predictive performance."


@dataclass
class Questionnaire:
    explainability_over_performance: bool = False
    parsimony_very_important: bool = False
    irc_unimportant: bool = False
    faithfulness_important: bool = False
    parsimony_unimportant: bool = False
    lod_low_required: bool = False
    data_heterogeneous: bool = False

    @classmethod
    def from_bits(cls, bits):
        names = [f.name for f in fields(cls)]
        if len(bits) != len(names):
            raise ConfigError(f"questionnaire needs {len(names)} answers, got {len(bits)}")
        return cls(**{name: bool(bit) for name, bit in zip(names, bits)})


@dataclass(frozen=True)
class Recommendation:
    model: str
    rationale: str
    metric_profile: dict = field(default_factory=dict)
    implemented_in_toolkit: bool = False
    asked: tuple = ()

    def to_dict(self):
        return {
            'model': self.model,
            'rationale': self.rationale,
            'metric_profile': dict(self.metric_profile),
            'implemented_in_toolkit': self.implemented_in_toolkit,
            'asked': list(self.asked),
        }


def _build(model, asked, rationale=None):
    rationale = rationale or RATIONALES[model]
    if model not in IMPLEMENTED:
        rationale += (f" {model} is not built into the toolkit; attach it through the "
                      f"external model bridge.")
    return Recommendation(model=model, rationale=rationale, metric_profile=dict(METRIC_PROFILES[model]),
                          implemented_in_toolkit=model in IMPLEMENTED, asked=tuple(asked))


def walk(answer):
    """
    按决策树顺序提问, answer(key) -> bool
    只访问当前路径上的问题
    """
    asked = []

    def ask(key):
        asked.append(key)
        return answer(key)

    if ask('explainability_over_performance'):
        return _build(GLRM, asked)
    if ask('parsimony_very_important'):
        return _build(CNN if ask('irc_unimportant') else LSTM, asked)
    if ask('faithfulness_important'):
        return _build(XGB, asked, f"{RATIONALES[XGB]} {GLRM_NOTE}")
    if ask('parsimony_unimportant'):
        return _build(RF, asked)
    if ask('lod_low_required'):
        return _build(XGB, asked, XGB_LOD_RATIONALE)
    return _build(LLM if ask('data_heterogeneous') else LR, asked)


def recommend(questionnaire):
    return walk(lambda key: getattr(questionnaire, key))


def recommend_from_answers(answers):
    """批量模式: 答案按实际提问顺序消费, 多余答案忽略"""
    remaining = list(answers)

    def answer(key):
        if not remaining:
            raise ConfigError(f"not enough answers: no answer left for {key!r}")
        return remaining.pop(0)

    recommendation = walk(answer)
    if remaining:
        logger.info(f"Ignored {len(remaining)} surplus answer(s)")
    return recommendation


def parse_answer(text):
    value = text.strip().lower()
    if value in ('y', 'yes'):
        return True
    if value in ('n', 'no'):
        return False
    return None


def parse_answers(text):
    """'y,n,yes' -> [True, False, True]"""
    answers = []
    for raw in text.split(','):
        value = parse_answer(raw)
        if value is None:
            raise ConfigError(f"invalid answer {raw!r}: use y or n")
        answers.append(value)
    return answers


def render_recommendation(recommendation):
    lines = [f"Recommended model: {recommendation.model}",
             f"Rationale: {recommendation.rationale}"]
    lines.extend(f"  {metric}: {flag}" for metric, flag in recommendation.metric_profile.items())
    lines.append(DISCLAIMER)
    return '\n'.join(lines)


class RecommendationEngine:
    """交互式问答, ask / tell 可替换以便脚本化"""

    def __init__(self, ask=None, tell=None):
        self.ask = ask or (lambda question: click.prompt(question, type=str))
        self.tell = tell or click.echo

    def _answer(self, key):
        while True:
            value = parse_answer(self.ask(f"{QUESTIONS[key]} [y/n]"))
            if value is not None:
                return value
            self.tell("Please answer y or n.")

    def interactive_guide(self):
        recommendation = walk(self._answer)
        self.tell(render_recommendation(recommendation))
        return recommendation


def interactive_guide(ask=None, tell=None):
    return RecommendationEngine(ask, tell).interactive_guide()
