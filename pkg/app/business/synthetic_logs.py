import string
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from app.business.event_log import (
    ACTIVITY, CASE_ID, DEVIANT, DYNAMIC_CATEGORICAL, DYNAMIC_NUMERIC, LABEL, REGULAR,
    STATIC_CATEGORICAL, STATIC_NUMERIC, TIMESTAMP, AttributeSchema, Event, EventLog, Trace,
)
from app.business.preprocessing import CASE, CONTROL, EVENT
from app.errors import ConfigError

logger = logging.getLogger(__name__)

CONTROL_PRESENCE = 'control_presence'
CONTROL_FOLLOWS = 'control_follows'
CASE_THRESHOLD = 'case_threshold'
EVENT_MEAN_THRESHOLD = 'event_mean_threshold'
RULES = (CONTROL_PRESENCE, CONTROL_FOLLOWS, CASE_THRESHOLD, EVENT_MEAN_THRESHOLD)

# 各规则预期主导的属性类型
DOMINANT_TYPES = {
    CONTROL_PRESENCE: CONTROL,
    CONTROL_FOLLOWS: CONTROL,
    CASE_THRESHOLD: CASE,
    EVENT_MEAN_THRESHOLD: EVENT,
}

TIMESTAMP_FORMAT = '%Y-%m-%d %H:%M:%S.%f'
START = datetime(2020, 1, 1)


def activity_names(n):
    """A, B, ..., Z, 之后为 A27, A28, ..."""
    letters = string.ascii_uppercase
    return tuple(letters[i] if i < len(letters) else f"A{i + 1}" for i in range(n))


@dataclass(frozen=True)
class SynthSpec:
    """
    合成日志参数
    数值属性服从 [0, 1] 均匀分布, 类别属性在 categorical_levels 个取值中均匀抽取
    属性命名: 静态数值 s1.., 静态类别 sc1.., 动态数值 d1.., 动态类别 dc1..
    """
    n_cases: int = 1000
    n_activities: int = 5
    min_length: int = 2
    max_length: int = 6
    n_static_categorical: int = 1
    n_static_numeric: int = 1
    n_dynamic_categorical: int = 1
    n_dynamic_numeric: int = 1
    rule: str = CONTROL_PRESENCE
    rule_args: tuple = ('A',)
    label_noise: float = 0.0
    seed: int = 0
    categorical_levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'rule_args', tuple(self.rule_args))
        if self.n_cases < 1:
            raise ConfigError("n_cases must be at least 1")
        if self.n_activities < 1:
            raise ConfigError("n_activities must be at least 1")
        if not 1 <= self.min_length <= self.max_length:
            raise ConfigError("trace length range must satisfy 1 <= min_length <= max_length")
        if self.categorical_levels < 1:
            raise ConfigError("categorical_levels must be at least 1")
        if not 0.0 <= self.label_noise < 0.5:
            raise ConfigError(f"label_noise must lie in [0, 0.5), got {self.label_noise}")
        self._check_rule()

    def _check_rule(self):
        if self.rule not in RULES:
            raise ConfigError(f"unknown rule {self.rule!r}")
        expected = 1 if self.rule == CONTROL_PRESENCE else 2
        if len(self.rule_args) != expected:
            raise ConfigError(f"rule {self.rule} takes {expected} argument(s)")
        if self.rule in (CONTROL_PRESENCE, CONTROL_FOLLOWS):
            for activity in self.rule_args:
                if activity not in self.activities:
                    raise ConfigError(f"rule activity {activity!r} not in alphabet")
            if self.rule == CONTROL_FOLLOWS and self.rule_args[0] == self.rule_args[1]:
                raise ConfigError("control_follows needs two different activities")
            return
        attribute, threshold = self.rule_args
        pool = self.static_numeric if self.rule == CASE_THRESHOLD else self.dynamic_numeric
        if attribute not in pool:
            raise ConfigError(f"rule attribute {attribute!r} not generated (have {', '.join(pool) or 'none'})")
        try:
            float(threshold)
        except (TypeError, ValueError):
            raise ConfigError(f"rule threshold {threshold!r} is not a number")

    @property
    def activities(self):
        return activity_names(self.n_activities)

    @property
    def static_numeric(self):
        return tuple(f"s{i + 1}" for i in range(self.n_static_numeric))

    @property
    def static_categorical(self):
        return tuple(f"sc{i + 1}" for i in range(self.n_static_categorical))

    @property
    def dynamic_numeric(self):
        return tuple(f"d{i + 1}" for i in range(self.n_dynamic_numeric))

    @property
    def dynamic_categorical(self):
        return tuple(f"dc{i + 1}" for i in range(self.n_dynamic_categorical))

    @property
    def dominant_type(self):
        return DOMINANT_TYPES[self.rule]

    def schema(self):
        roles = {'case': CASE_ID, 'activity': ACTIVITY, 'timestamp': TIMESTAMP, 'label': LABEL}
        roles.update({name: STATIC_CATEGORICAL for name in self.static_categorical})
        roles.update({name: STATIC_NUMERIC for name in self.static_numeric})
        roles.update({name: DYNAMIC_CATEGORICAL for name in self.dynamic_categorical})
        roles.update({name: DYNAMIC_NUMERIC for name in self.dynamic_numeric})
        return AttributeSchema(column_roles=roles, timestamp_format=TIMESTAMP_FORMAT)


def spec_from_mapping(values):
    """`log.<name>.synth.<field>` 配置项 -> SynthSpec"""
    ints = ('n_cases', 'n_activities', 'min_length', 'max_length', 'n_static_categorical',
            'n_static_numeric', 'n_dynamic_categorical', 'n_dynamic_numeric', 'seed',
            'categorical_levels')
    kwargs = {}
    try:
        for key, raw in values.items():
            if key in ints:
                kwargs[key] = int(raw)
            elif key == 'label_noise':
                kwargs[key] = float(raw)
            elif key == 'rule':
                kwargs[key] = raw.strip()
            elif key == 'rule_args':
                kwargs[key] = tuple(part.strip() for part in raw.split(','))
            else:
                raise ConfigError(f"unknown synth field {key!r}")
    except ValueError as e:
        raise ConfigError(f"bad synth field value: {e}") from e
    return SynthSpec(**kwargs)


def evaluate_rule(spec, trace):
    """在一条 trace 上重新计算植入规则 (不含噪声)"""
    activities = trace.activities
    if spec.rule == CONTROL_PRESENCE:
        return DEVIANT if spec.rule_args[0] in activities else REGULAR
    if spec.rule == CONTROL_FOLLOWS:
        a, b = spec.rule_args
        positions = [i for i, activity in enumerate(activities) if activity == a]
        if not positions:
            return REGULAR
        return REGULAR if b in activities[positions[-1] + 1:] else DEVIANT
    attribute, threshold = spec.rule_args[0], float(spec.rule_args[1])
    if spec.rule == CASE_THRESHOLD:
        return DEVIANT if trace.events[0].statics[attribute] > threshold else REGULAR
    mean = float(np.mean([event.dynamics[attribute] for event in trace.events]))
    return DEVIANT if mean > threshold else REGULAR


def _categorical(rng, prefix, levels):
    return f"{prefix}_v{int(rng.integers(0, levels)) + 1}"


def _generate_trace(spec, index):
    # 每个 case 独立种子, 与生成顺序无关
    rng = np.random.default_rng([spec.seed, index])
    case_id = f"case_{index:06d}"
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    statics = {name: _categorical(rng, name, spec.categorical_levels) for name in spec.static_categorical}
    statics.update({name: float(rng.random()) for name in spec.static_numeric})

    offset_ms = int(rng.integers(0, spec.n_cases * 3_600_000))
    timestamp = START + timedelta(milliseconds=offset_ms)
    activities = spec.activities
    events = []
    for _ in range(length):
        dynamics = {name: _categorical(rng, name, spec.categorical_levels)
                    for name in spec.dynamic_categorical}
        dynamics.update({name: float(rng.random()) for name in spec.dynamic_numeric})
        activity = activities[int(rng.integers(0, len(activities)))]
        events.append(Event(case_id=case_id, activity=activity, timestamp=timestamp,
                            statics=dict(statics), dynamics=dynamics))
        timestamp = timestamp + timedelta(milliseconds=int(rng.integers(1_000, 7_200_000)))

    trace = Trace(case_id=case_id, events=tuple(events))
    label = evaluate_rule(spec, trace)
    if rng.random() < spec.label_noise:
        label = 1 - label
    return Trace(case_id=case_id, events=trace.events, label=label)


def generate_log(spec):
    traces = tuple(_generate_trace(spec, index) for index in range(spec.n_cases))
    log = EventLog(traces=traces, schema=spec.schema())
    deviant = sum(trace.label for trace in traces)
    logger.info(f"Generated synthetic log: {spec.n_cases} cases, rule={spec.rule}{spec.rule_args}, "
                f"noise={spec.label_noise}, deviant={deviant}")
    return log
