import os
import logging
from functools import partial
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from app.business.attribute_importance import load_external_weights, model_weights, permutation_importance
from app.business.event_log import load_schema, parse_csv
from app.business.explainability_metrics import (
    MetricsReport, TypedMetric, functional_complexity_by_type, irc, lod_at_k, parsimony,
)
from app.business.model_training import grid_search, train_model
from app.business.predictor import EXTERNAL, FOREST, MODEL_KINDS, auc
from app.business.preprocessing import aggregate_encode, extract_prefixes, fit_vocabulary, temporal_split
from app.business.seeds import derive_seed
from app.business.synthetic_logs import generate_log, spec_from_mapping
from app.errors import ConfigError, DegenerateRankingError, XmopError
from app.services.command_bridge_service import CommandBridgeService
from app.services.http_bridge_service import HttpBridgeService
from config import Config, load_key_value_file

logger = logging.getLogger(__name__)

TOOLKIT_DEFAULT, GRID = 'toolkit default', 'grid'


def _number(raw):
    text = str(raw).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}")


@dataclass(frozen=True)
class LogSource:
    """CSV 日志 (path + schema) 或合成日志 (synth)"""
    name: str
    path: str | None = None
    schema_path: str | None = None
    synth: object = None

    def load(self):
        if self.synth is not None:
            return generate_log(self.synth)
        try:
            schema = load_schema(self.schema_path)
            with open(self.path, encoding='utf-8') as stream:
                return parse_csv(stream, schema)
        except OSError as e:
            raise ConfigError(f"cannot read log {self.name!r}: {e}") from e


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hyper: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    @property
    def name(self):
        return self.kind


@dataclass(frozen=True)
class ExternalModelConfig:
    name: str
    weights: str
    command: str | None = None
    url: str | None = None

    def predictor(self, column_names):
        if self.command:
            return CommandBridgeService(self.command, column_names)
        return HttpBridgeService(self.url, column_names)


@dataclass(frozen=True)
class BenchmarkConfig:
    logs: tuple
    models: tuple
    seed: int
    max_prefix: int = 5
    train_ratio: float = Config.TRAIN_RATIO
    externals: tuple = ()
    pi_repeats: int = Config.PI_REPEATS
    pi_loss: str = 'mse'
    output_dir: str = 'out'

    def __post_init__(self):
        if not self.models and not self.externals:
            raise ConfigError("benchmark needs at least one model")
        if not self.logs:
            raise ConfigError("benchmark needs at least one log")
        if self.seed is None:
            raise ConfigError("benchmark needs a master seed")
        if self.max_prefix < 1:
            raise ConfigError("max_prefix must be at least 1")
        if self.pi_repeats < 1:
            raise ConfigError("pi_repeats must be at least 1")

    @classmethod
    def from_file(cls, path, seed=None, output_dir=None):
        values = load_key_value_file(path)
        return cls.from_mapping(values, base_dir=os.path.dirname(os.path.abspath(path)),
                                seed=seed, output_dir=output_dir)

    @classmethod
    def from_mapping(cls, values, base_dir='.', seed=None, output_dir=None):
        """
        解析 `key = value` 配置:
        seed, max_prefix, train_ratio, pi_repeats, pi_loss, output_dir, models = logreg,tree,...
        model.<kind>.<hyper>, model.<kind>.grid.<hyper> = v1,v2
        log.<name>.path | schema | synth.<field>
        external.<name>.command | url | weights
        """
        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base_dir, p)

        logs, hypers, grids, externals = {}, {}, {}, {}
        for key, raw in values.items():
            parts = key.split('.')
            if parts[0] == 'log' and len(parts) >= 3:
                entry = logs.setdefault(parts[1], {'synth': {}})
                if parts[2] == 'synth' and len(parts) == 4:
                    entry['synth'][parts[3]] = raw
                elif parts[2] in ('path', 'schema') and len(parts) == 3:
                    entry[parts[2]] = resolve(raw.strip())
                else:
                    raise ConfigError(f"unknown log key {key!r}")
            elif parts[0] == 'model' and len(parts) == 3:
                hypers.setdefault(parts[1], {})[parts[2]] = _number(raw)
            elif parts[0] == 'model' and len(parts) == 4 and parts[2] == 'grid':
                grids.setdefault(parts[1], {})[parts[3]] = [_number(v) for v in raw.split(',')]
            elif parts[0] == 'external' and len(parts) == 3:
                if parts[2] not in ('command', 'url', 'weights'):
                    raise ConfigError(f"unknown external key {key!r}")
                externals.setdefault(parts[1], {})[parts[2]] = raw.strip()

        kinds = [k.strip() for k in values.get('models', '').split(',') if k.strip()]
        for kind in kinds:
            if kind not in MODEL_KINDS or kind == EXTERNAL:
                raise ConfigError(f"unknown built-in model kind {kind!r}")
        for kind in set(hypers) | set(grids):
            if kind not in kinds:
                raise ConfigError(f"hyperparameters given for unlisted model {kind!r}")

        sources = []
        for name, entry in logs.items():
            if entry['synth']:
                sources.append(LogSource(name=name, synth=spec_from_mapping(entry['synth'])))
            elif 'path' in entry and 'schema' in entry:
                sources.append(LogSource(name=name, path=entry['path'], schema_path=entry['schema']))
            else:
                raise ConfigError(f"log {name!r} needs path and schema, or synth fields")

        bridged = []
        for name, entry in externals.items():
            if not entry.get('weights'):
                raise ConfigError(f"external model {name!r} must declare a weights file")
            if bool(entry.get('command')) == bool(entry.get('url')):
                raise ConfigError(f"external model {name!r} needs exactly one of command or url")
            bridged.append(ExternalModelConfig(name=name, weights=resolve(entry['weights']),
                                               command=entry.get('command'), url=entry.get('url')))

        if seed is None and values.get('seed', '').strip():
            seed = int(values['seed'])
        try:
            return cls(
                logs=tuple(sources),
                models=tuple(ModelConfig(kind, hypers.get(kind, {}), grids.get(kind, {})) for kind in kinds),
                seed=seed,
                max_prefix=int(values.get('max_prefix', 5)),
                train_ratio=float(values.get('train_ratio', Config.TRAIN_RATIO)),
                externals=tuple(bridged),
                pi_repeats=int(values.get('pi_repeats', Config.PI_REPEATS)),
                pi_loss=values.get('pi_loss', 'mse').strip(),
                output_dir=output_dir or resolve(values.get('output_dir', 'out')),
            )
        except ValueError as e:
            raise ConfigError(f"bad benchmark setting: {e}") from e


def exclusion_reason(mean_auc):
    """按所有模型的平均 AUC 判断日志是否排除在 XAI 评估之外 (严格小于)"""
    if mean_auc < Config.EXCLUDE_BELOW:
        return f"avg AUC below {Config.EXCLUDE_BELOW * 100:g}"
    if mean_auc < Config.XAI_BELOW:
        return f"avg AUC below {Config.XAI_BELOW * 100:g}"
    return ''


def _now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class _Cell:
    report: MetricsReport
    predictor: object = None
    weights: object = None


def _train_cell(cfg, model_cfg, train_log, m_train, m_test, log_name, model_seed):
    hyper = dict(model_cfg.hyper)
    if model_cfg.kind == FOREST and 'seed' not in hyper:
        hyper['seed'] = model_seed
    source = TOOLKIT_DEFAULT
    if model_cfg.grid:
        hyper = grid_search(model_cfg.kind, train_log, cfg.max_prefix, model_cfg.grid, hyper)
        source = GRID
    model = train_model(model_cfg.kind, m_train, hyper)
    report = MetricsReport(log=log_name, model=model_cfg.name, seed=model_seed,
                           auc=auc(m_test.labels, model.predict_proba(m_test)),
                           provenance={'kind': model_cfg.kind, 'hyper': model.hyper, 'hyper_source': source})
    return _Cell(report=report, predictor=model, weights=lambda: model_weights(model))


def _external_cell(external, m_test, log_name, model_seed):
    predictor = external.predictor(m_test.column_names)
    report = MetricsReport(log=log_name, model=external.name, seed=model_seed,
                           auc=auc(m_test.labels, predictor.predict_proba(m_test)),
                           provenance={'kind': EXTERNAL, 'weights': external.weights})
    return _Cell(report=report, predictor=predictor,
                 weights=lambda: load_external_weights(external.weights, m_test.column_names))


def _explain(cell, cfg, m_test):
    """计算 PI, w_E, C_t, FC_t, IRC, LOD@10"""
    report = cell.report
    w_pi = permutation_importance(cell.predictor, m_test, m_test.labels,
                                  seed=derive_seed(report.seed, 'pi'),
                                  repeats=cfg.pi_repeats, loss=cfg.pi_loss)
    w_e = cell.weights()
    report.parsimony = parsimony(w_e, m_test.columns)
    report.fc = functional_complexity_by_type(cell.predictor, m_test, seed=derive_seed(report.seed, 'fc'))
    try:
        report.irc = irc(w_pi, w_e)
    except DegenerateRankingError as e:
        logger.info(f"IRC undefined for {report.log}/{report.model}: {e}")
        report.irc = None
    report.lod_at_10 = lod_at_k(w_pi, w_e, m_test.columns, Config.TOP_K)


def run_log(cfg, source, log=None):
    """单个日志上的全部单元, 顺序为配置中的模型顺序; 可直接传入已解析的日志"""
    log_seed = derive_seed(cfg.seed, f"log:{source.name}")
    names = [model.name for model in cfg.models] + [external.name for external in cfg.externals]
    try:
        log = source.load() if log is None else log
        train_log, test_log = temporal_split(log, cfg.train_ratio)
        vocab = fit_vocabulary(train_log)
        m_train = aggregate_encode(extract_prefixes(train_log, cfg.max_prefix), log.schema, vocab)
        m_test = aggregate_encode(extract_prefixes(test_log, cfg.max_prefix), log.schema, vocab)
    except XmopError as e:
        logger.warning(f"Log {source.name} failed before training: {e}")
        return [MetricsReport(log=source.name, model=name, seed=log_seed, excluded_reason=f"error: {e}")
                for name in names]

    cells = []
    jobs = [(model.name, partial(_train_cell, cfg, model, train_log, m_train, m_test, source.name))
            for model in cfg.models]
    jobs += [(external.name, partial(_external_cell, external, m_test, source.name))
             for external in cfg.externals]
    for name, job in jobs:
        model_seed = derive_seed(log_seed, f"model:{name}")
        started = _now()
        try:
            cell = job(model_seed)
        except XmopError as e:
            logger.warning(f"Cell {source.name}/{name} failed: {e}")
            cell = _Cell(report=MetricsReport(log=source.name, model=name, seed=model_seed,
                                              excluded_reason=f"error: {e}"))
        cell.report.started_at = started
        cells.append(cell)

    scores = [cell.report.auc for cell in cells if cell.report.auc is not None]
    reason = exclusion_reason(float(np.mean(scores))) if scores else ''
    if reason:
        logger.info(f"Log {source.name} excluded from XAI evaluation: {reason}")
    for cell in cells:
        report = cell.report
        if report.auc is not None:
            if reason:
                report.excluded_reason = reason
            else:
                try:
                    _explain(cell, cfg, m_test)
                except XmopError as e:
                    logger.warning(f"Metrics for {source.name}/{report.model} failed: {e}")
                    report.parsimony = report.fc = report.irc = report.lod_at_10 = None
                    report.excluded_reason = f"error: {e}"
        report.finished_at = _now()
    return [cell.report for cell in cells]


def run_benchmark(cfg):
    reports = []
    for source in cfg.logs:
        logger.info(f"Benchmarking log {source.name}")
        reports.extend(run_log(cfg, source))
    return reports


@dataclass(frozen=True)
class ModelSummary:
    model: str
    n_logs: int
    auc: float | None
    parsimony: TypedMetric | None
    fc: TypedMetric | None
    irc: float | None
    lod_at_10: float | None


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _mean_typed(metrics):
    metrics = [m for m in metrics if m is not None]
    if not metrics:
        return None
    return TypedMetric(*(_mean([m.get(name) for m in metrics])
                         for name in ('control', 'case', 'event', 'total')))


def summarize_by_model(reports):
    """每个模型在纳入评估的日志上的各指标均值, 模型顺序按首次出现"""
    grouped = {}
    for report in reports:
        grouped.setdefault(report.model, [])
        if report.included:
            grouped[report.model].append(report)
    return [ModelSummary(model=model, n_logs=len(rows),
                         auc=_mean([r.auc for r in rows]),
                         parsimony=_mean_typed([r.parsimony for r in rows]),
                         fc=_mean_typed([r.fc for r in rows]),
                         irc=_mean([r.irc for r in rows]),
                         lod_at_10=_mean([r.lod_at_10 for r in rows]))
            for model, rows in grouped.items()]
