import logging

import requests

from app.business.predictor import check_signature
from app.business.preprocessing import export_matrix
from app.errors import BridgeError
from app.services.command_bridge_service import parse_probabilities
from config import Config

logger = logging.getLogger(__name__)


class HttpBridgeService:
    """以 HTTP 接口接入的外部任务模型, 报文格式与子进程桥接相同"""

    def __init__(self, url, column_names, timeout=None):
        self.url = url
        self.api_key = Config.BRIDGE_API_KEY
        self.column_names = tuple(column_names)
        self.timeout = Config.BRIDGE_TIMEOUT if timeout is None else timeout

    def predict_proba(self, matrix):
        check_signature(self, matrix)
        headers = {"Content-Type": "text/csv; charset=utf-8"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = export_matrix(matrix, include_label=False).encode('utf-8')

        try:
            logger.info(f"Scoring {matrix.n_rows} rows with external model at {self.url}")
            response = requests.post(self.url, headers=headers, data=payload, timeout=self.timeout)
            response.raise_for_status()
        except requests.exceptions.Timeout as e:
            logger.error(f"External model at {self.url} timed out")
            raise BridgeError(f"external model timed out after {self.timeout} s") from e
        except requests.exceptions.RequestException as e:
            logger.error(f"External model call failed: {str(e)}")
            raise BridgeError(f"external model call failed: {str(e)}") from e
        return parse_probabilities(response.text, matrix.n_rows)
