import io
import logging

from flask import Blueprint, jsonify, request, Response
from werkzeug.exceptions import HTTPException
from werkzeug.utils import secure_filename

from app.business.benchmark import BenchmarkConfig, LogSource, ModelConfig, run_log
from app.business.event_log import parse_csv, schema_from_mapping
from app.business.explainability_metrics import irc, lod_at_k, parsimony, parsimony_fraction
from app.business.recommendation_engine import Questionnaire, recommend, recommend_from_answers
from app.business.report_renderer import render_report
from app.errors import ConfigError, DegenerateRankingError, XmopError
from config import Config, parse_key_value_text

logger = logging.getLogger(__name__)

main = Blueprint('main', __name__)


@main.errorhandler(XmopError)
def handle_xmop_error(e):
    logger.warning(f"Request rejected: {e}")
    return jsonify({'error': str(e)}), 400


@main.errorhandler(Exception)
def handle_unexpected_error(e):
    if isinstance(e, HTTPException):
        return e
    logger.exception("Unexpected error while handling request")
    return jsonify({'error': str(e)}), 500


@main.route('/health')
def health_check():
    return jsonify({'status': 'ok'})


@main.route('/api/guide', methods=['POST'])
def guide():
    """
    {"answers": [true, false, ...]} 按提问顺序消费
    或 {"questionnaire": {"parsimony_very_important": true, ...}}
    """
    payload = request.get_json(silent=True) or {}
    if 'answers' in payload:
        recommendation = recommend_from_answers([bool(a) for a in payload['answers']])
    elif 'questionnaire' in payload:
        try:
            questionnaire = Questionnaire(**payload['questionnaire'])
        except TypeError as e:
            raise ConfigError(f"bad questionnaire: {e}") from e
        recommendation = recommend(questionnaire)
    else:
        return jsonify({'error': 'expected answers or questionnaire'}), 400
    return jsonify(recommendation.to_dict())


def _typed_dict(metric):
    return {'control': metric.control, 'case': metric.case, 'event': metric.event, 'total': metric.total}


@main.route('/api/metrics', methods=['POST'])
def metrics():
    """{"types": [...], "w_pi": [...], "w_e": [...], "k": 10} -> 简约性, IRC, LOD@k"""
    payload = request.get_json(silent=True) or {}
    try:
        types = list(payload['types'])
        w_pi = [float(v) for v in payload['w_pi']]
        w_e = [float(v) for v in payload['w_e']]
    except (KeyError, TypeError, ValueError) as e:
        return jsonify({'error': f'expected types, w_pi and w_e: {e}'}), 400
    if not len(types) == len(w_pi) == len(w_e):
        return jsonify({'error': 'types, w_pi and w_e must have the same length'}), 400
    k = int(payload.get('k', Config.TOP_K))
    eps = payload.get('eps')

    result = {
        'parsimony': _typed_dict(parsimony(w_e, types, eps)),
        'parsimony_fraction': _typed_dict(parsimony_fraction(w_e, types, eps)),
        'lod_at_k': lod_at_k(w_pi, w_e, types, k),
        'k': k,
    }
    try:
        result['irc'] = irc(w_pi, w_e)
    except DegenerateRankingError:
        result['irc'] = None
    return jsonify(result)


@main.route('/api/bench', methods=['POST'])
def bench():
    """上传日志 CSV (log) 与 schema 文本, 表单给出 seed / max_prefix / models, 返回 CSV 报告"""
    if 'log' not in request.files:
        return jsonify({'error': 'missing log file'}), 400
    schema = schema_from_mapping(parse_key_value_text(request.form.get('schema', '')))
    log_file = request.files['log']
    try:
        text = log_file.read().decode('utf-8')
    except UnicodeDecodeError as e:
        return jsonify({'error': f'log file is not valid UTF-8: {e}'}), 400
    log = parse_csv(io.StringIO(text), schema)

    try:
        seed = int(request.form['seed'])
        max_prefix = int(request.form.get('max_prefix', 5))
    except (KeyError, ValueError):
        return jsonify({'error': 'seed (and an integer max_prefix) required'}), 400
    kinds = [k.strip() for k in request.form.get('models', 'logreg').split(',') if k.strip()]
    name = secure_filename(log_file.filename or '') or 'upload'

    source = LogSource(name=name)
    cfg = BenchmarkConfig(logs=(source,), models=tuple(ModelConfig(kind) for kind in kinds),
                          seed=seed, max_prefix=max_prefix)
    reports = run_log(cfg, source, log=log)
    return Response(render_report(reports, format='csv'), mimetype='text/csv')
