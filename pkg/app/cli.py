import os
import pickle
import logging

import click

from app.business.attribute_importance import load_external_weights, model_weights, permutation_importance
from app.business.benchmark import BenchmarkConfig, run_benchmark
from app.business.event_log import describe_log, dump_schema, load_schema, parse_csv, serialize_csv
from app.business.explainability_metrics import (
    MetricsReport, functional_complexity_by_type, irc, lod_at_k, parsimony,
)
from app.business.model_training import train_model
from app.business.predictor import FOREST, MODEL_KINDS, EXTERNAL, auc, export_model
from app.business.preprocessing import (
    aggregate_encode, export_matrix, extract_prefixes, fit_vocabulary, parse_matrix, temporal_split,
)
from app.business.recommendation_engine import (
    interactive_guide, parse_answers, recommend_from_answers, render_recommendation,
)
from app.business.report_renderer import FORMATS, read_report_csv, render_report
from app.business.seeds import derive_seed
from app.business.synthetic_logs import RULES, SynthSpec, generate_log
from app.errors import DegenerateRankingError, XmopError
from app.services.command_bridge_service import CommandBridgeService
from app.services.http_bridge_service import HttpBridgeService
from config import Config

logger = logging.getLogger(__name__)


def _require_seed(ctx):
    seed = ctx.obj['seed']
    if seed is None:
        raise click.UsageError("this command is stochastic: pass --seed")
    return seed


def _out_path(ctx, name):
    out_dir = ctx.obj['out_dir'] or 'out'
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _write(path, text):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    click.echo(f"wrote {path}")


def _read_matrix(path):
    with open(path, encoding='utf-8') as f:
        return parse_matrix(f.read())


def _parse_hyper(pairs):
    hyper = {}
    for pair in pairs:
        key, sep, raw = pair.partition('=')
        if not sep:
            raise click.BadParameter(f"expected key=value, got {pair!r}", param_hint='--hyper')
        try:
            hyper[key.strip()] = int(raw)
        except ValueError:
            try:
                hyper[key.strip()] = float(raw)
            except ValueError:
                raise click.BadParameter(f"{key} needs a number", param_hint='--hyper')
    return hyper


class XmopGroup(click.Group):
    """把业务异常转成 click 的错误输出"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except XmopError as e:
            raise click.ClickException(str(e)) from e


@click.group(cls=XmopGroup)
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Master seed (u64).')
@click.option('--config', 'config_path', type=click.Path(), default=None, help='Benchmark config file.')
@click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output directory.')
@click.pass_context
def cli(ctx, seed, config_path, out_dir):
    """Explainability evaluation toolkit for process outcome prediction."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, config_path=config_path, out_dir=out_dir)


@cli.command()
@click.option('--log', 'log_path', required=True, type=click.Path(exists=True))
@click.option('--schema', 'schema_path', required=True, type=click.Path(exists=True))
@click.option('--max-prefix', required=True, type=click.IntRange(min=1))
@click.option('--train-ratio', type=float, default=Config.TRAIN_RATIO, show_default=True)
@click.pass_context
def encode(ctx, log_path, schema_path, max_prefix, train_ratio):
    """Split a log in time and write the encoded train/test matrices."""
    schema = load_schema(schema_path)
    with open(log_path, encoding='utf-8') as stream:
        log = parse_csv(stream, schema)
    stats = describe_log(log, max_prefix)
    click.echo(f"{stats.traces} traces, {stats.events} events, {stats.activities} activities, "
               f"deviant ratio {stats.deviant_ratio}")
    train, test = temporal_split(log, train_ratio)
    vocab = fit_vocabulary(train)
    m_train = aggregate_encode(extract_prefixes(train, max_prefix), schema, vocab)
    m_test = aggregate_encode(extract_prefixes(test, max_prefix), schema, vocab)
    _write(_out_path(ctx, 'train_matrix.csv'), export_matrix(m_train))
    _write(_out_path(ctx, 'test_matrix.csv'), export_matrix(m_test))


@cli.command()
@click.option('--matrix', 'matrix_path', required=True, type=click.Path(exists=True))
@click.option('--model', 'kind', required=True,
              type=click.Choice([k for k in MODEL_KINDS if k != EXTERNAL]))
@click.option('--hyper', multiple=True, help='Hyperparameter as key=value, repeatable.')
@click.pass_context
def train(ctx, matrix_path, kind, hyper):
    """Train a built-in model; writes model.pkl and the model.txt export."""
    hyper = _parse_hyper(hyper)
    if kind == FOREST and 'seed' not in hyper:
        hyper['seed'] = derive_seed(_require_seed(ctx), f"model:{kind}")
    model = train_model(kind, _read_matrix(matrix_path), hyper)
    with open(_out_path(ctx, 'model.pkl'), 'wb') as f:
        pickle.dump(model, f)
    _write(_out_path(ctx, 'model.txt'), export_model(model))
    click.echo(f"training AUC = {model.training_auc}")


def _load_model(path):
    with open(path, 'rb') as f:
        return pickle.load(f)


@cli.command()
@click.option('--model', 'model_path', required=True, type=click.Path(exists=True))
@click.option('--matrix', 'matrix_path', required=True, type=click.Path(exists=True))
def evaluate(model_path, matrix_path):
    """Report the test AUC of a trained model."""
    model = _load_model(model_path)
    m = _read_matrix(matrix_path)
    click.echo(f"AUC = {auc(m.labels, model.predict_proba(m))!r}")


@cli.command()
@click.option('--matrix', 'matrix_path', required=True, type=click.Path(exists=True))
@click.option('--model', 'model_path', type=click.Path(exists=True), default=None)
@click.option('--command', default=None, help='External model command (subprocess bridge).')
@click.option('--url', default=None, help='External model URL (HTTP bridge).')
@click.option('--weights', 'weights_path', type=click.Path(exists=True), default=None)
@click.option('--repeats', type=click.IntRange(min=1), default=Config.PI_REPEATS, show_default=True)
@click.option('--format', 'fmt', type=click.Choice(['table', 'csv']), default='table')
@click.pass_context
def metrics(ctx, matrix_path, model_path, command, url, weights_path, repeats, fmt):
    """Compute AUC, parsimony, FC, IRC and LOD@10 for one model on one matrix."""
    seed = _require_seed(ctx)
    if sum(x is not None for x in (model_path, command, url)) != 1:
        raise click.UsageError("pass exactly one of --model, --command or --url")
    m = _read_matrix(matrix_path)
    if model_path:
        predictor = _load_model(model_path)
        name = predictor.kind
        w_e = load_external_weights(weights_path, m.column_names) if weights_path else model_weights(predictor)
    else:
        if not weights_path:
            raise click.UsageError("external models need --weights")
        predictor = (CommandBridgeService(command, m.column_names) if command
                     else HttpBridgeService(url, m.column_names))
        name = EXTERNAL
        w_e = load_external_weights(weights_path, m.column_names)

    report = MetricsReport(log=os.path.basename(matrix_path), model=name, seed=seed,
                           auc=auc(m.labels, predictor.predict_proba(m)))
    w_pi = permutation_importance(predictor, m, m.labels, seed=derive_seed(seed, 'pi'), repeats=repeats)
    report.parsimony = parsimony(w_e, m.columns)
    report.fc = functional_complexity_by_type(predictor, m, seed=derive_seed(seed, 'fc'))
    try:
        report.irc = irc(w_pi, w_e)
    except DegenerateRankingError as e:
        click.echo(f"IRC undefined: {e}", err=True)
    report.lod_at_10 = lod_at_k(w_pi, w_e, m.columns, Config.TOP_K)
    click.echo(render_report([report], format=fmt), nl=False)


@cli.command()
@click.option('--answers', default=None, help='Batch answers in question order, e.g. y,n,n.')
def guide(answers):
    """Walk the model-selection guidelines."""
    if answers is None:
        interactive_guide()
        return
    click.echo(render_recommendation(recommend_from_answers(parse_answers(answers))))


@cli.command()
@click.option('--n-cases', type=click.IntRange(min=1), default=1000, show_default=True)
@click.option('--activities', 'n_activities', type=click.IntRange(min=1), default=5, show_default=True)
@click.option('--min-length', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--max-length', type=click.IntRange(min=1), default=6, show_default=True)
@click.option('--static-categorical', type=click.IntRange(min=0), default=1, show_default=True)
@click.option('--static-numeric', type=click.IntRange(min=0), default=1, show_default=True)
@click.option('--dynamic-categorical', type=click.IntRange(min=0), default=1, show_default=True)
@click.option('--dynamic-numeric', type=click.IntRange(min=0), default=1, show_default=True)
@click.option('--rule', type=click.Choice(RULES), default=RULES[0], show_default=True)
@click.option('--rule-args', default='A', show_default=True, help='Comma separated, e.g. s1,0.5')
@click.option('--noise', type=float, default=0.0, show_default=True)
@click.pass_context
def synth(ctx, n_cases, n_activities, min_length, max_length, static_categorical, static_numeric,
          dynamic_categorical, dynamic_numeric, rule, rule_args, noise):
    """Generate a synthetic log with a planted outcome rule."""
    spec = SynthSpec(n_cases=n_cases, n_activities=n_activities, min_length=min_length,
                     max_length=max_length, n_static_categorical=static_categorical,
                     n_static_numeric=static_numeric, n_dynamic_categorical=dynamic_categorical,
                     n_dynamic_numeric=dynamic_numeric, rule=rule,
                     rule_args=tuple(part.strip() for part in rule_args.split(',')),
                     label_noise=noise, seed=_require_seed(ctx))
    log = generate_log(spec)
    _write(_out_path(ctx, 'synth.csv'), serialize_csv(log))
    _write(_out_path(ctx, 'synth.schema'), dump_schema(log.schema))


@cli.command()
@click.pass_context
def bench(ctx):
    """Run the benchmark described by --config."""
    if not ctx.obj['config_path']:
        raise click.UsageError("bench needs --config")
    try:
        cfg = BenchmarkConfig.from_file(ctx.obj['config_path'], seed=ctx.obj['seed'],
                                        output_dir=ctx.obj['out_dir'])
    except FileNotFoundError as e:
        raise click.UsageError(str(e))
    reports = run_benchmark(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write(os.path.join(cfg.output_dir, 'reports.csv'), render_report(reports, format='csv'))
    _write(os.path.join(cfg.output_dir, 'reports.txt'), render_report(reports, format='table'))
    _write(os.path.join(cfg.output_dir, 'summary.txt'), render_report(reports, format='summary'))


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True))
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default='table', show_default=True)
def report(input_path, fmt):
    """Re-render a reports.csv file."""
    with open(input_path, encoding='utf-8') as f:
        reports = read_report_csv(f.read())
    click.echo(render_report(reports, format=fmt), nl=False)


if __name__ == '__main__':
    cli(prog_name='xmop')
