import io
import logging

import numpy as np
import pandas as pd

from app.business.benchmark import summarize_by_model
from app.business.explainability_metrics import MetricsReport, TypedMetric
from app.business.preprocessing import ATTRIBUTE_TYPES, format_number
from app.errors import ConfigError

logger = logging.getLogger(__name__)

CSV_HEADER = ('log', 'model', 'auc', 'C_control', 'C_case', 'C_event',
              'FC_control', 'FC_case', 'FC_event', 'IRC', 'LOD@10', 'excluded_reason')
SUMMARY_HEADER = ('model', 'n_logs', 'auc', 'C_control', 'C_case', 'C_event',
                  'FC_control', 'FC_case', 'FC_event', 'IRC', 'LOD@10')
TEXT_COLUMNS = {'log', 'model', 'excluded_reason'}
FORMATS = ('table', 'csv', 'summary')


def _typed(metric, attribute_type):
    return None if metric is None else metric.get(attribute_type)


def _values(item):
    return ([item.auc]
            + [_typed(item.parsimony, t) for t in ATTRIBUTE_TYPES]
            + [_typed(item.fc, t) for t in ATTRIBUTE_TYPES]
            + [item.irc, item.lod_at_10])


def _csv_cell(value):
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format_number(value)


def _table_cell(value):
    if value is None:
        return '-'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.4f}"


def _to_csv(header, rows):
    frame = pd.DataFrame(rows, columns=list(header), dtype=object)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def _to_table(header, rows):
    """等宽对齐: 文本列左对齐, 数值列右对齐, 列间两个空格"""
    widths = [max([len(name)] + [len(row[i]) for row in rows]) for i, name in enumerate(header)]

    def line(cells):
        padded = [cell.ljust(width) if name in TEXT_COLUMNS else cell.rjust(width)
                  for name, cell, width in zip(header, cells, widths)]
        return '  '.join(padded).rstrip()

    lines = [line(header), line(['-' * width for width in widths])]
    lines.extend(line(row) for row in rows)
    return '\n'.join(lines) + '\n'


def render_report(reports, format='csv'):
    if format not in FORMATS:
        raise ConfigError(f"unknown report format {format!r}")
    if format == 'summary':
        summaries = summarize_by_model(reports)
        rows = [[s.model, str(s.n_logs)] + [_table_cell(v) for v in _values(s)] for s in summaries]
        return _to_table(SUMMARY_HEADER, rows)
    if format == 'csv':
        rows = [[r.log, r.model] + [_csv_cell(v) for v in _values(r)] + [r.excluded_reason]
                for r in reports]
        return _to_csv(CSV_HEADER, rows)
    rows = [[r.log, r.model] + [_table_cell(v) for v in _values(r)] + [r.excluded_reason]
            for r in reports]
    return _to_table(CSV_HEADER, rows)


def _optional(raw, cast):
    return None if raw == '' else cast(raw)


def read_report_csv(text):
    """render_report(format='csv') 的逆操作, 供 report 子命令重新渲染"""
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, na_filter=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigError(f"malformed report CSV: {e}") from e
    if tuple(frame.columns) != CSV_HEADER:
        raise ConfigError("report CSV header does not match the expected columns")

    reports = []
    for record in frame.to_dict('records'):
        counts = [_optional(record[f"C_{t}"], int) for t in ATTRIBUTE_TYPES]
        fcs = [_optional(record[f"FC_{t}"], float) for t in ATTRIBUTE_TYPES]
        parsimony = None
        if all(c is not None for c in counts):
            parsimony = TypedMetric(*counts, total=sum(counts))
        fc = None
        defined = [v for v in fcs if v is not None]
        if defined:
            fc = TypedMetric(*fcs, total=float(np.mean(defined)))
        reports.append(MetricsReport(
            log=record['log'], model=record['model'],
            auc=_optional(record['auc'], float),
            parsimony=parsimony, fc=fc,
            irc=_optional(record['IRC'], float),
            lod_at_10=_optional(record['LOD@10'], float),
            excluded_reason=record['excluded_reason'],
        ))
    return reports
