import io

import numpy as np
import pytest

from app.business.event_log import (
    ACTIVITY, CASE_ID, DYNAMIC_CATEGORICAL, DYNAMIC_NUMERIC, LABEL, STATIC_CATEGORICAL,
    STATIC_NUMERIC, TIMESTAMP, AttributeSchema, parse_csv,
)
from app.business.preprocessing import CASE, CONTROL, EVENT, ColumnMeta, EncodedMatrix

SMALL_LOG_CSV = (
    "case,activity,timestamp,label,channel,amount,cost,resource\n"
    "c1,A,2021-01-01 10:00:00,deviant,web,5.0,10,r1\n"
    "c2,B,2021-01-02 08:00:00,regular,shop,7.5,4,r2\n"
    "c1,B,2021-01-01 10:00:10,deviant,web,5.0,20,r2\n"
    "c2,C,2021-01-02 08:01:00,regular,shop,7.5,6,r2\n"
    "c1,A,2021-01-01 10:00:30,deviant,web,5.0,30,r1\n"
)


@pytest.fixture
def schema():
    return AttributeSchema(column_roles={
        'case': CASE_ID,
        'activity': ACTIVITY,
        'timestamp': TIMESTAMP,
        'label': LABEL,
        'channel': STATIC_CATEGORICAL,
        'amount': STATIC_NUMERIC,
        'cost': DYNAMIC_NUMERIC,
        'resource': DYNAMIC_CATEGORICAL,
    })


@pytest.fixture
def small_log(schema):
    return parse_csv(io.StringIO(SMALL_LOG_CSV), schema)


def make_matrix(rows, types, labels=None, names=None):
    """按给定属性类型手工构造 EncodedMatrix"""
    rows = np.asarray(rows, dtype=float)
    names = names or [f"x{i}" for i in range(rows.shape[1])]
    columns = tuple(ColumnMeta(name, t, name, 'passthrough') for name, t in zip(names, types))
    if labels is None:
        labels = np.zeros(rows.shape[0], dtype=int)
    return EncodedMatrix(columns=columns, rows=rows, labels=labels,
                         provenance=tuple((f"r{i}", 1) for i in range(rows.shape[0])))


@pytest.fixture
def matrix_factory():
    return make_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
