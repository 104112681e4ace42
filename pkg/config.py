import io
import os
import logging
from dotenv import load_dotenv, dotenv_values

# 加载 .env 文件
load_dotenv()

# 配置日志
logging.basicConfig(level=os.getenv('XMOP_LOG_LEVEL', 'INFO'))
logger = logging.getLogger(__name__)


def _env_float(name, default):
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} is not a number, using {default}")
        return default


class Config:
    LOG_LEVEL = os.getenv('XMOP_LOG_LEVEL', 'INFO')

    # 外部模型桥接
    BRIDGE_TIMEOUT = _env_float('XMOP_BRIDGE_TIMEOUT', 300.0)
    BRIDGE_API_KEY = os.getenv('XMOP_BRIDGE_API_KEY')

    # 指标参数
    THRESHOLD = _env_float('XMOP_THRESHOLD', 0.5)
    PARSIMONY_EPS = _env_float('XMOP_PARSIMONY_EPS', 1e-9)
    TOP_K = int(_env_float('XMOP_TOP_K', 10))
    TRAIN_RATIO = _env_float('XMOP_TRAIN_RATIO', 0.8)
    PI_REPEATS = int(_env_float('XMOP_PI_REPEATS', 1))

    # 日志过滤阈值 (AUC, [0,1] 区间)
    EXCLUDE_BELOW = _env_float('XMOP_EXCLUDE_BELOW', 0.50)
    XAI_BELOW = _env_float('XMOP_XAI_BELOW', 0.75)

    # 默认超参数 (工具包自定的默认值)
    LOGREG_DEFAULTS = {'l2': 0.01, 'max_iter': 2000, 'tol': 1e-7, 'learning_rate': 0.1}
    TREE_DEFAULTS = {'max_depth': 6, 'min_samples_leaf': 5}
    FOREST_DEFAULTS = {'n_trees': 100, 'max_depth': 6, 'min_samples_leaf': 5,
                       'max_features_fraction': 0.5, 'seed': 0}
    LLM_DEFAULTS = {'max_depth': 2, 'min_samples_leaf': 20, 'l2': 0.01,
                    'max_iter': 2000, 'tol': 1e-7, 'learning_rate': 0.1}

    # 验证配置
    @classmethod
    def validate(cls):
        if cls.BRIDGE_TIMEOUT <= 0:
            logger.warning("XMOP_BRIDGE_TIMEOUT must be positive")
        if not 0.0 < cls.THRESHOLD < 1.0:
            logger.warning("XMOP_THRESHOLD outside (0, 1)")
        if not 0.0 < cls.TRAIN_RATIO < 1.0:
            logger.warning("XMOP_TRAIN_RATIO outside (0, 1)")
        if cls.TOP_K < 1:
            logger.warning("XMOP_TOP_K must be at least 1")
        if cls.PI_REPEATS < 1:
            logger.warning("XMOP_PI_REPEATS must be at least 1")
        if cls.XAI_BELOW < cls.EXCLUDE_BELOW:
            logger.warning("XMOP_XAI_BELOW is lower than XMOP_EXCLUDE_BELOW")


def load_key_value_file(path):
    """读取 `key = value` 纯文本配置文件, 保留声明顺序"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return _clean(dotenv_values(path, interpolate=False))


def parse_key_value_text(text):
    """与 load_key_value_file 相同的解析规则, 输入为文本 (如上传的 schema)"""
    return _clean(dotenv_values(stream=io.StringIO(text), interpolate=False))


def _clean(values):
    return {key: ('' if value is None else value) for key, value in values.items()}


# 在应用启动时验证配置
Config.validate()
