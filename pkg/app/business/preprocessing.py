import io
import math
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from app.errors import PreprocessError

logger = logging.getLogger(__name__)

CONTROL, CASE, EVENT = 'control', 'case', 'event'
ATTRIBUTE_TYPES = (CONTROL, CASE, EVENT)

STATISTICS = ('min', 'max', 'mean', 'sum', 'std')
TIME_FEATURES = ('timesincelastevent', 'timesincecasestart', 'timesincemidnight')


@dataclass(frozen=True)
class Prefix:
    events: tuple
    case_id: str
    length: int
    label: int


@dataclass(frozen=True)
class PrefixLog:
    prefixes: tuple

    def __len__(self):
        return len(self.prefixes)


@dataclass(frozen=True)
class Vocabulary:
    """每个类别属性 (含 activity) 在训练日志中按首次出现顺序的取值"""
    values: dict

    def get(self, attribute):
        return self.values.get(attribute, ())


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    attribute_type: str
    source: str
    derivation: str


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    columns: tuple
    rows: np.ndarray
    labels: np.ndarray
    provenance: tuple

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float).reshape(len(self.provenance), len(self.columns))
        labels = np.array(self.labels, dtype=int).reshape(len(self.provenance))
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'labels', labels)
        for meta in self.columns:
            if meta.attribute_type not in ATTRIBUTE_TYPES:
                raise PreprocessError(f"column {meta.name!r} has unknown attribute type")

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def n_columns(self):
        return len(self.columns)

    @property
    def column_names(self):
        return tuple(meta.name for meta in self.columns)

    @property
    def attribute_types(self):
        return tuple(meta.attribute_type for meta in self.columns)

    def indices_of(self, attribute_type):
        return [i for i, meta in enumerate(self.columns) if meta.attribute_type == attribute_type]

    def type_counts(self):
        return {t: len(self.indices_of(t)) for t in ATTRIBUTE_TYPES}

    def with_rows(self, rows):
        return replace(self, rows=np.array(rows, dtype=float))

    def subset(self, row_indices):
        row_indices = np.asarray(row_indices, dtype=int)
        return EncodedMatrix(columns=self.columns,
                             rows=self.rows[row_indices],
                             labels=self.labels[row_indices],
                             provenance=tuple(self.provenance[i] for i in row_indices))


def temporal_split(log, train_ratio):
    """
    按首个事件时间排序后切分, 训练集中与测试期重叠的事件被截掉
    """
    if not 0.0 < train_ratio < 1.0:
        raise PreprocessError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    if not log.is_labelled():
        raise PreprocessError("temporal split needs a fully labelled log")

    ordered = sorted(log.traces, key=lambda trace: trace.start_time)
    n_train = math.ceil(round(train_ratio * len(ordered), 9))
    train_traces, test_traces = ordered[:n_train], ordered[n_train:]
    if not train_traces or not test_traces:
        raise PreprocessError("temporal split left one side empty")

    test_start = test_traces[0].start_time
    cut = []
    for trace in train_traces:
        kept = tuple(event for event in trace.events if event.timestamp < test_start)
        if kept:
            cut.append(replace(trace, events=kept))
    if not cut:
        raise PreprocessError("temporal split left one side empty")

    logger.info(f"Temporal split: {len(cut)} train cases "
                f"({len(train_traces) - len(cut)} dropped by cutting), {len(test_traces)} test cases")
    return replace(log, traces=tuple(cut)), replace(log, traces=tuple(test_traces))


def extract_prefixes(log, max_prefix):
    """每条 trace 生成长度 1..min(n, max_prefix) 的前缀, 步长固定为 1"""
    if max_prefix < 1:
        raise PreprocessError("max_prefix must be at least 1")
    prefixes = []
    for trace in sorted(log.traces, key=lambda t: t.case_id):
        for k in range(1, min(len(trace), max_prefix) + 1):
            prefixes.append(Prefix(events=trace.events[:k], case_id=trace.case_id,
                                   length=k, label=trace.label))
    return PrefixLog(prefixes=tuple(prefixes))


def fit_vocabulary(train):
    schema = train.schema
    values = {schema.activity_column: {}}
    for column in schema.static_categorical + schema.dynamic_categorical:
        values[column] = {}
    for trace in train.traces:
        for event in trace.events:
            values[schema.activity_column].setdefault(event.activity, None)
            for column in schema.static_categorical:
                values[column].setdefault(event.statics[column], None)
            for column in schema.dynamic_categorical:
                values[column].setdefault(event.dynamics[column], None)
    return Vocabulary(values={attribute: tuple(seen) for attribute, seen in values.items()})


def _seconds_since_midnight(ts):
    midnight = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    return (ts - midnight).total_seconds()


def _event_frame(prefixes, schema):
    records = []
    for index, prefix in enumerate(prefixes.prefixes):
        start = prefix.events[0].timestamp
        previous = None
        for event in prefix.events:
            ts = event.timestamp
            record = {
                'meta:prefix': index,
                'cat:' + schema.activity_column: event.activity,
                'num:timesincelastevent': 0.0 if previous is None else (ts - previous).total_seconds(),
                'num:timesincecasestart': (ts - start).total_seconds(),
                'num:timesincemidnight': _seconds_since_midnight(ts),
            }
            for column in schema.dynamic_numeric:
                record['dnum:' + column] = event.dynamics[column]
            for column in schema.dynamic_categorical:
                record['cat:' + column] = event.dynamics[column]
            records.append(record)
            previous = ts
    return pd.DataFrame.from_records(records)


def _numeric(series, column):
    converted = pd.to_numeric(series, errors='coerce')
    if converted.isna().any():
        raise PreprocessError(f"numeric column {column!r} contains non-numeric text")
    return converted.astype(float)


def _frequencies(frame, column, vocabulary, n_rows):
    """前缀内每个词表取值的出现次数, 未见过的取值不计入任何列"""
    if not vocabulary:
        return np.zeros((n_rows, 0))
    codes = pd.Categorical(frame['cat:' + column], categories=list(vocabulary))
    dummies = pd.get_dummies(codes, dtype=float)
    dummies.index = frame['meta:prefix'].to_numpy()
    counts = dummies.groupby(level=0).sum().reindex(range(n_rows), fill_value=0.0)
    return counts.to_numpy()


def _summaries(series, prefix_index, n_rows):
    grouped = series.groupby(prefix_index).agg(list(STATISTICS))
    grouped['std'] = grouped['std'].fillna(0.0)
    return grouped.reindex(range(n_rows)).to_numpy()


def aggregate_encode(prefixes, schema, vocab):
    """
    聚合编码:
    control: activity 频次
    case: 静态类别 one-hot, 静态数值直通
    event: 时间特征与动态数值的 min/max/mean/sum/std, 动态类别频次
    std 为样本标准差 (n-1), 单事件前缀记为 0
    """
    n_rows = len(prefixes)
    columns = []
    blocks = []

    frame = _event_frame(prefixes, schema) if n_rows else None

    activity = schema.activity_column
    for value in vocab.get(activity):
        columns.append(ColumnMeta(f"{activity}={value}", CONTROL, activity, 'frequency'))
    blocks.append(_frequencies(frame, activity, vocab.get(activity), n_rows)
                  if n_rows else np.zeros((0, len(vocab.get(activity)))))

    last_statics = [prefix.events[-1].statics for prefix in prefixes.prefixes]
    for column in schema.static_categorical:
        values = vocab.get(column)
        block = np.zeros((n_rows, len(values)))
        position = {value: i for i, value in enumerate(values)}
        for row, statics in enumerate(last_statics):
            i = position.get(statics[column])
            if i is not None:
                block[row, i] = 1.0
        columns.extend(ColumnMeta(f"{column}={value}", CASE, column, 'onehot') for value in values)
        blocks.append(block)
    for column in schema.static_numeric:
        series = _numeric(pd.Series([statics[column] for statics in last_statics], dtype=object), column)
        columns.append(ColumnMeta(column, CASE, column, 'passthrough'))
        blocks.append(series.to_numpy().reshape(n_rows, 1))

    numeric_sources = [('num:' + name, name) for name in TIME_FEATURES]
    numeric_sources += [('dnum:' + column, column) for column in schema.dynamic_numeric]
    for key, name in numeric_sources:
        columns.extend(ColumnMeta(f"{name}_{stat}", EVENT, name, stat) for stat in STATISTICS)
        if n_rows:
            series = _numeric(frame[key], name)
            blocks.append(_summaries(series, frame['meta:prefix'], n_rows))
        else:
            blocks.append(np.zeros((0, len(STATISTICS))))
    for column in schema.dynamic_categorical:
        values = vocab.get(column)
        columns.extend(ColumnMeta(f"{column}={value}", EVENT, column, 'frequency') for value in values)
        blocks.append(_frequencies(frame, column, values, n_rows) if n_rows else np.zeros((0, len(values))))

    rows = np.hstack(blocks) if blocks else np.zeros((n_rows, 0))
    matrix = EncodedMatrix(
        columns=tuple(columns),
        rows=rows,
        labels=np.array([prefix.label for prefix in prefixes.prefixes], dtype=int),
        provenance=tuple((prefix.case_id, prefix.length) for prefix in prefixes.prefixes),
    )
    counts = matrix.type_counts()
    logger.info(f"Encoded {matrix.n_rows} prefixes into {matrix.n_columns} columns "
                f"(control={counts[CONTROL]}, case={counts[CASE]}, event={counts[EVENT]})")
    return matrix


def format_number(value):
    """最短往返十进制表示"""
    value = float(value)
    if value == 0.0:
        return '0.0'
    return repr(value)


def export_matrix(matrix, include_label=True):
    """导出为 CSV, 表头为 `<列名>:<属性类型>`, 可选末列 label; 也是桥接协议的输入格式"""
    header = [f"{meta.name}:{meta.attribute_type}" for meta in matrix.columns]
    body = [[format_number(value) for value in row] for row in matrix.rows]
    if include_label:
        header.append('label')
        for cells, label in zip(body, matrix.labels):
            cells.append(str(int(label)))
    frame = pd.DataFrame(body, columns=header, dtype=object)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def parse_matrix(text):
    """export_matrix 的逆操作; 行来源记为 (行号, 0)"""
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, na_filter=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise PreprocessError(f"malformed matrix file: {e}") from e
    header = list(frame.columns)
    labels = np.zeros(len(frame), dtype=int)
    if header and header[-1] == 'label':
        labels = frame.pop('label').astype(int).to_numpy()
        header = header[:-1]
    columns = []
    for item in header:
        name, sep, attribute_type = item.rpartition(':')
        if not sep or attribute_type not in ATTRIBUTE_TYPES:
            raise PreprocessError(f"matrix header cell {item!r} lacks an attribute type")
        columns.append(ColumnMeta(name, attribute_type, name, 'passthrough'))
    try:
        rows = frame.to_numpy(dtype=float) if header else np.zeros((len(frame), 0))
    except ValueError as e:
        raise PreprocessError(f"matrix file holds non-numeric cells: {e}") from e
    return EncodedMatrix(columns=tuple(columns), rows=rows, labels=labels,
                         provenance=tuple((str(i), 0) for i in range(len(frame))))
