class XmopError(Exception):
    """工具包所有业务异常的基类"""


class ConfigError(XmopError):
    pass


class SchemaError(XmopError):
    pass


class EventLogError(XmopError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class PreprocessError(XmopError):
    pass


class ModelError(XmopError):
    pass


class SignatureMismatchError(ModelError):
    pass


class BridgeError(XmopError):
    pass


class WeightFileError(XmopError):
    pass


class MetricError(XmopError):
    pass


class DegenerateRankingError(MetricError):
    pass


class UndefinedMetricError(MetricError):
    pass
