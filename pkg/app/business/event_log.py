import io
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np
import pandas as pd

from app.errors import EventLogError, SchemaError
from config import load_key_value_file

logger = logging.getLogger(__name__)

CASE_ID = 'case_id'
ACTIVITY = 'activity'
TIMESTAMP = 'timestamp'
LABEL = 'label'
STATIC_CATEGORICAL = 'static_categorical'
STATIC_NUMERIC = 'static_numeric'
DYNAMIC_CATEGORICAL = 'dynamic_categorical'
DYNAMIC_NUMERIC = 'dynamic_numeric'

ROLES = (CASE_ID, ACTIVITY, TIMESTAMP, LABEL,
         STATIC_CATEGORICAL, STATIC_NUMERIC, DYNAMIC_CATEGORICAL, DYNAMIC_NUMERIC)
SINGLE_ROLES = (CASE_ID, ACTIVITY, TIMESTAMP)

MISSING = '__missing__'
REGULAR, DEVIANT = 0, 1

_SETTINGS = ('timestamp_format', 'positive_label', 'negative_label')


@dataclass(frozen=True)
class AttributeSchema:
    """列名 -> 角色 的映射, 保留声明顺序"""
    column_roles: dict
    timestamp_format: str = '%Y-%m-%d %H:%M:%S'
    positive_label: str = 'deviant'
    negative_label: str = 'regular'

    def __post_init__(self):
        for column, role in self.column_roles.items():
            if role not in ROLES:
                raise SchemaError(f"unknown role {role!r} for column {column!r}")
        for role in SINGLE_ROLES:
            count = self.roles().count(role)
            if count != 1:
                raise SchemaError(f"schema needs exactly one {role} column, found {count}")
        if self.roles().count(LABEL) > 1:
            raise SchemaError("schema allows at most one label column")
        if self.positive_label == self.negative_label:
            raise SchemaError("positive_label and negative_label must differ")

    def roles(self):
        return list(self.column_roles.values())

    @property
    def columns(self):
        return tuple(self.column_roles)

    def columns_with(self, role):
        return tuple(c for c, r in self.column_roles.items() if r == role)

    def _single(self, role):
        found = self.columns_with(role)
        return found[0] if found else None

    @property
    def case_id_column(self):
        return self._single(CASE_ID)

    @property
    def activity_column(self):
        return self._single(ACTIVITY)

    @property
    def timestamp_column(self):
        return self._single(TIMESTAMP)

    @property
    def label_column(self):
        return self._single(LABEL)

    @property
    def static_categorical(self):
        return self.columns_with(STATIC_CATEGORICAL)

    @property
    def static_numeric(self):
        return self.columns_with(STATIC_NUMERIC)

    @property
    def dynamic_categorical(self):
        return self.columns_with(DYNAMIC_CATEGORICAL)

    @property
    def dynamic_numeric(self):
        return self.columns_with(DYNAMIC_NUMERIC)

    @property
    def static_columns(self):
        return tuple(c for c, r in self.column_roles.items() if r in (STATIC_CATEGORICAL, STATIC_NUMERIC))

    @property
    def dynamic_columns(self):
        return tuple(c for c, r in self.column_roles.items() if r in (DYNAMIC_CATEGORICAL, DYNAMIC_NUMERIC))


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: datetime
    statics: dict = field(default_factory=dict)
    dynamics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple
    label: int | None = None

    def __len__(self):
        return len(self.events)

    @property
    def activities(self):
        return [event.activity for event in self.events]

    @property
    def start_time(self):
        return self.events[0].timestamp


@dataclass(frozen=True)
class EventLog:
    traces: tuple
    schema: AttributeSchema

    def __post_init__(self):
        seen = set()
        for trace in self.traces:
            if trace.case_id in seen:
                raise EventLogError(f"duplicate case id {trace.case_id!r}")
            seen.add(trace.case_id)

    def __len__(self):
        return len(self.traces)

    @property
    def n_events(self):
        return sum(len(trace) for trace in self.traces)

    @property
    def labels(self):
        return [trace.label for trace in self.traces]

    def is_labelled(self):
        return all(trace.label is not None for trace in self.traces)


@dataclass(frozen=True)
class LogStatistics:
    traces: int
    events: int
    median_length: float
    max_length: int
    prefix: int
    activities: int
    variants: int
    static_categorical_levels: int
    dynamic_categorical_levels: int
    variants_per_trace: float
    events_per_trace: float
    distinct_activities_per_trace: float
    events_per_activity: float
    dynamic_static_ratio: float | None
    deviant_ratio: float | None


def load_schema(path):
    """读取 `column = role` 格式的 schema 配置文件"""
    values = load_key_value_file(path)
    return schema_from_mapping(values)


def schema_from_mapping(values):
    settings = {key: values[key] for key in _SETTINGS if key in values}
    roles = {key: value.strip() for key, value in values.items() if key not in _SETTINGS}
    return AttributeSchema(column_roles=roles, **settings)


def dump_schema(schema):
    lines = [f"{column} = {role}" for column, role in schema.column_roles.items()]
    lines.append(f"timestamp_format = {schema.timestamp_format}")
    lines.append(f"positive_label = {schema.positive_label}")
    lines.append(f"negative_label = {schema.negative_label}")
    return '\n'.join(lines) + '\n'


def parse_csv(stream, schema):
    """
    解析 UTF-8 CSV 事件日志
    按 case 分组, case 内按时间戳稳定排序 (时间相同时保持文件顺序)
    行号从 1 开始计数, 不含表头
    """
    try:
        raw = pd.read_csv(stream, header=None, dtype=str, keep_default_na=False,
                          na_filter=False, encoding='utf-8', skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise EventLogError(f"empty event log file: {e}") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise EventLogError(f"malformed CSV: {e}") from e

    header = [str(name) for name in raw.iloc[0]]
    _check_header(header, schema)
    frame = raw.iloc[1:].copy()
    frame.columns = header
    frame = frame.reset_index(drop=True)

    timestamps = pd.to_datetime(frame[schema.timestamp_column], format=schema.timestamp_format,
                                errors='coerce')
    bad = timestamps.isna()
    if bad.any():
        row = int(bad.idxmax()) + 1
        raise EventLogError(
            f"unparseable timestamp {frame[schema.timestamp_column].iloc[row - 1]!r}", row=row)
    frame['_ts'] = timestamps.dt.floor('ms')
    frame['_row'] = range(1, len(frame) + 1)

    traces = []
    for case_id, group in frame.groupby(schema.case_id_column, sort=False):
        group = group.sort_values('_ts', kind='stable')
        traces.append(_build_trace(str(case_id), group, schema))

    log = EventLog(traces=tuple(traces), schema=schema)
    logger.info(f"Parsed event log: {len(log)} traces, {log.n_events} events")
    return log


def _check_header(header, schema):
    duplicates = sorted({name for name in header if header.count(name) > 1})
    if duplicates:
        raise SchemaError(f"duplicate columns in file: {', '.join(duplicates)}")
    missing = [column for column in schema.columns if column not in header]
    if missing:
        raise SchemaError(f"columns missing from file: {', '.join(missing)}")
    unassigned = [column for column in header if column not in schema.column_roles]
    if unassigned:
        raise SchemaError(f"columns without a role: {', '.join(unassigned)}")


def _cell_value(raw, role, column, row):
    if role in (STATIC_NUMERIC, DYNAMIC_NUMERIC):
        if raw == '':
            raise EventLogError(f"missing numeric value in column {column!r}", row=row)
        try:
            return float(raw)
        except ValueError:
            raise EventLogError(f"non-numeric value {raw!r} in column {column!r}", row=row)
    return raw if raw != '' else MISSING


def _build_trace(case_id, group, schema):
    events = []
    label_values = set()
    label_row = None
    first_statics = None
    for record in group.to_dict('records'):
        row = record['_row']
        statics = {c: _cell_value(record[c], schema.column_roles[c], c, row) for c in schema.static_columns}
        dynamics = {c: _cell_value(record[c], schema.column_roles[c], c, row) for c in schema.dynamic_columns}
        if first_statics is None:
            first_statics = statics
        else:
            for column, value in statics.items():
                if value != first_statics[column]:
                    raise EventLogError(
                        f"static attribute varies in case {case_id!r}: {column}", row=row)
        if schema.label_column is not None:
            label_values.add(record[schema.label_column])
            if label_row is None:
                label_row = row
        activity = record[schema.activity_column] or MISSING
        events.append(Event(case_id=case_id, activity=activity,
                            timestamp=record['_ts'].to_pydatetime(),
                            statics=statics, dynamics=dynamics))

    if len(label_values) > 1:
        raise EventLogError(f"label inconsistent within case {case_id!r}")
    label = None
    if label_values:
        value = label_values.pop()
        if value == schema.positive_label:
            label = DEVIANT
        elif value == schema.negative_label:
            label = REGULAR
        elif value != '':
            raise EventLogError(f"unknown label value {value!r} in case {case_id!r}", row=label_row)
    return Trace(case_id=case_id, events=tuple(events), label=label)


def serialize_csv(log):
    """EventLog -> CSV 文本, 与 parse_csv 互逆"""
    schema = log.schema
    records = []
    for trace in log.traces:
        for event in trace.events:
            record = {}
            for column, role in schema.column_roles.items():
                if role == CASE_ID:
                    value = trace.case_id
                elif role == ACTIVITY:
                    value = event.activity
                elif role == TIMESTAMP:
                    value = event.timestamp.strftime(schema.timestamp_format)
                elif role == LABEL:
                    if trace.label is None:
                        value = ''
                    else:
                        value = schema.positive_label if trace.label == DEVIANT else schema.negative_label
                elif role in (STATIC_CATEGORICAL, STATIC_NUMERIC):
                    value = _format_cell(event.statics[column])
                else:
                    value = _format_cell(event.dynamics[column])
                record[column] = value
            records.append(record)
    frame = pd.DataFrame(records, columns=list(schema.columns), dtype=object)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def label_eventually_followed_by(log, a, b):
    """
    每个 a 之后都必须出现 b: 满足则为 regular (0), 否则 deviant (1)
    返回新的日志, 输入不变
    """
    if a == b:
        raise EventLogError("eventually-followed-by rule needs two different activities")
    traces = []
    for trace in log.traces:
        activities = trace.activities
        last_a = max((i for i, act in enumerate(activities) if act == a), default=None)
        if last_a is None:
            label = REGULAR
        else:
            followed = any(act == b for act in activities[last_a + 1:])
            label = REGULAR if followed else DEVIANT
        traces.append(replace(trace, label=label))
    return replace(log, traces=tuple(traces))


def describe_log(log, max_prefix):
    """事件日志的规格统计"""
    lengths = [len(trace) for trace in log.traces]
    activities = {event.activity for trace in log.traces for event in trace.events}
    variants = {tuple(trace.activities) for trace in log.traces}
    schema = log.schema
    static_levels = sum(
        len({trace.events[0].statics[c] for trace in log.traces if trace.events})
        for c in schema.static_categorical)
    dynamic_levels = sum(
        len({event.dynamics[c] for trace in log.traces for event in trace.events})
        for c in schema.dynamic_categorical)
    n = len(lengths)
    labelled = [trace.label for trace in log.traces if trace.label is not None]
    return LogStatistics(
        traces=n,
        events=sum(lengths),
        median_length=float(np.median(lengths)) if lengths else 0.0,
        max_length=max(lengths, default=0),
        prefix=min(max_prefix, max(lengths, default=0)),
        activities=len(activities),
        variants=len(variants),
        static_categorical_levels=static_levels,
        dynamic_categorical_levels=dynamic_levels,
        variants_per_trace=len(variants) / n if n else 0.0,
        events_per_trace=sum(lengths) / n if n else 0.0,
        distinct_activities_per_trace=(sum(len(set(trace.activities)) for trace in log.traces) / n
                                       if n else 0.0),
        events_per_activity=sum(lengths) / len(activities) if activities else 0.0,
        dynamic_static_ratio=dynamic_levels / static_levels if static_levels else None,
        deviant_ratio=sum(labelled) / len(labelled) if labelled else None,
    )
