import math
import shlex
import logging
import subprocess

import numpy as np

from app.business.predictor import check_signature
from app.business.preprocessing import export_matrix
from app.errors import BridgeError
from config import Config

logger = logging.getLogger(__name__)


def parse_probabilities(text, expected):
    """每行一个 [0,1] 内的小数, LF 结尾"""
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if len(lines) != expected:
        raise BridgeError(f"line count mismatch: expected {expected}, got {len(lines)}")
    values = []
    for number, line in enumerate(lines, start=1):
        try:
            value = float(line.strip())
        except ValueError:
            raise BridgeError(f"line {number}: {line!r} is not a decimal number")
        if not math.isfinite(value) or not 0.0 <= value <= 1.0:
            raise BridgeError(f"line {number}: value {value} outside [0,1]")
        values.append(value)
    return np.array(values, dtype=float)


def external_predict(command, m, timeout=None):
    """
    启动外部命令, 通过 stdin 写入矩阵 CSV (不含 label 列), 从 stdout 读取 l 行概率
    """
    timeout = Config.BRIDGE_TIMEOUT if timeout is None else timeout
    payload = export_matrix(m, include_label=False).encode('utf-8')
    args = shlex.split(command)
    if not args:
        raise BridgeError("empty external model command")
    try:
        logger.info(f"Scoring {m.n_rows} rows with external command {args[0]}")
        completed = subprocess.run(args, input=payload, capture_output=True, timeout=timeout)
    except subprocess.TimeoutExpired as e:
        logger.error(f"External model timed out after {timeout} s")
        raise BridgeError(f"external model timed out after {timeout} s") from e
    except OSError as e:
        logger.error(f"External model could not start: {e}")
        raise BridgeError(f"external model could not start: {e}") from e
    if completed.returncode != 0:
        stderr = completed.stderr.decode('utf-8', errors='replace').strip()
        raise BridgeError(f"external model exited with code {completed.returncode}: {stderr[-500:]}")
    try:
        text = completed.stdout.decode('utf-8')
    except UnicodeDecodeError as e:
        raise BridgeError(f"external model output is not UTF-8: {e}") from e
    return parse_probabilities(text, m.n_rows)


class CommandBridgeService:
    """以子进程形式接入的外部任务模型"""

    def __init__(self, command, column_names, timeout=None):
        self.command = command
        self.column_names = tuple(column_names)
        self.timeout = Config.BRIDGE_TIMEOUT if timeout is None else timeout

    def predict_proba(self, matrix):
        check_signature(self, matrix)
        return external_predict(self.command, matrix, timeout=self.timeout)
