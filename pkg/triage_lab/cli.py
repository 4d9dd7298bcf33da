# triage_lab/cli.py
import logging
import os
import time
from dataclasses import dataclass

import click

from config import Config
from triage_lab import __version__, configure_logging, create_config
from triage_lab.corpus import dataset_paths, dataset_stats, load_dataset_dir
from triage_lab.evalkit import aggregate, evaluate_query, oracle_labels
from triage_lab.lupin import run_l2r_protocol, run_lupin_experiment
from triage_lab.metafeatures import export_feature_csv, meta_features_for
from triage_lab.miner import mine as mine_repository
from triage_lab.models import Approach, MinerConfig, RankedRecommendation, TriageLabError
from triage_lab.recommenders import build_history, freq_recommend, textsim_recommend
from triage_lab.reporting import (
    build_manifest, load_report, performance_table, recommendations_from_dict, recommendations_to_dict,
    render_experiment, write_experiment,
)
from triage_lab.synthetic import write_dataset
from triage_lab.utils import parse_timestamp, read_json, write_json

logger = logging.getLogger(__name__)

APPROACHES = ('freq', 'textsim', 'l2r', 'lupin', 'oracle')


@dataclass
class CliState:
    config: object
    out: str
    seed: int

    def output(self, name):
        os.makedirs(self.out, exist_ok=True)
        return os.path.join(self.out, name)


data_option = click.option('--data', 'data_dir', required=True, type=click.Path(file_okay=False),
                           help='Directory holding reports.jsonl, commits.jsonl, code.jsonl and identities.json.')


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Static INI config file.')
@click.option('--seed', type=int, help='Master seed for the rank learner and generated data.')
@click.option('--jobs', type=click.IntRange(min=1), help='Upper bound on worker threads/processes.')
@click.option('--out', default='.', show_default=True, type=click.Path(file_okay=False),
              help='Output directory.')
@click.option('--verbose', '-v', is_flag=True, help='Log debug output.')
@click.version_option(__version__, prog_name='triage-lab')
@click.pass_context
def cli(ctx, config_path, seed, jobs, out, verbose):
    """Bug triage experiments: FREQ, TEXTSIM, L2R and the Lupin meta-recommender."""
    configure_logging(level=logging.DEBUG if verbose else None)
    ctx.obj = CliState(
        config=create_config(path=config_path, ranker_seed=seed, jobs=jobs),
        out=out,
        seed=Config.SEED if seed is None else seed,
    )


@cli.command()
@click.option('--repo', required=True, help='Repository slug, owner/name.')
@click.option('--since', help='Only harvest items updated after this RFC 3339 timestamp.')
@click.option('--page-size', default=Config.PAGE_SIZE, show_default=True, type=click.IntRange(1, 100))
@click.option('--fixture', 'fixture_path', type=click.Path(file_okay=False),
              help='Replay recorded responses from this directory instead of the network.')
@click.option('--record', 'record_dir', type=click.Path(file_okay=False),
              help='Record every response into this directory as a fixture.')
@click.pass_obj
def mine(state, repo, since, page_size, fixture_path, record_dir):
    """Harvest issues and commits into reports.jsonl and commits.jsonl."""
    config = MinerConfig(
        repository=repo,
        output_dir=state.out,
        token=os.environ.get(Config.TOKEN_ENV),
        since=parse_timestamp(since) if since else None,
        page_size=page_size,
        mode='fixture' if fixture_path else 'live',
        fixture_path=fixture_path,
        api_url=Config.API_URL,
    )
    paths = mine_repository(config, record_dir=record_dir)
    for path in paths.values():
        click.echo(path)


@cli.command()
@data_option
def ingest(data_dir):
    """Validate a dataset and print its statistics."""
    corpus = load_dataset_dir(data_dir)
    stats = dataset_stats(corpus)
    for key, value in stats.items():
        click.echo(f'{key}: {value:.3f}' if isinstance(value, float) else f'{key}: {value}')


@cli.command()
@data_option
@click.pass_obj
def features(state, data_dir):
    """Export the 23 query-quality features of every experimental report as CSV."""
    corpus = load_dataset_dir(data_dir)
    rows = []
    for report in corpus.experimental:
        ctx = build_history(corpus, report, state.config)
        rows.append((report.id, meta_features_for(corpus.queries[report.id], ctx,
                                                  pair_cap=state.config.cs_pair_cap)))
    path = state.output('features.csv')
    with open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(export_feature_csv(rows))
    click.echo(path)


def _history_recommendations(corpus, config, approach):
    recs = []
    for report in corpus.experimental:
        ctx = build_history(corpus, report, config)
        query = corpus.queries[report.id]
        if approach is Approach.FREQ:
            recs.append(freq_recommend(query, ctx))
        else:
            recs.append(textsim_recommend(query, ctx.report_index, ctx.fixers))
    return recs


def _protocol_recommendations(corpus, config, approach):
    protocol = run_l2r_protocol(corpus, config)
    if approach is Approach.L2R:
        return [r.recommendations[Approach.L2R] for r in protocol.records]
    if approach is Approach.ORACLE:
        chosen = oracle_labels({r.report_id: r.results for r in protocol.records})
        return [RankedRecommendation(r.report_id, r.recommendations[chosen[r.report_id]].ranked_developers,
                                     Approach.ORACLE, dispatched=chosen[r.report_id])
                for r in protocol.records]

    report = run_lupin_experiment(corpus, config, protocol)
    predictions = report.test_predictions[report.selected_classifier][0]
    by_id = protocol.by_id()
    return [RankedRecommendation(rid, by_id[rid].recommendations[a].ranked_developers, Approach.LUPIN, dispatched=a)
            for rid, a in predictions.items()]


@cli.command()
@click.option('--approach', required=True, type=click.Choice(APPROACHES, case_sensitive=False))
@data_option
@click.pass_obj
def run(state, approach, data_dir):
    """Write per-query recommendations of one approach as JSON."""
    approach = Approach(approach.upper())
    corpus = load_dataset_dir(data_dir)
    if approach in (Approach.FREQ, Approach.TEXTSIM):
        recs = _history_recommendations(corpus, state.config, approach)
    else:
        recs = _protocol_recommendations(corpus, state.config, approach)
    path = write_json(state.output(f'recommendations-{approach.value.lower()}.json'),
                      recommendations_to_dict(recs))
    click.echo(path)


@cli.command('eval')
@click.argument('recommendations', type=click.Path(dir_okay=False))
@data_option
@click.pass_obj
def eval_command(state, recommendations, data_dir):
    """Score a recommendations JSON file against the dataset's ground truth."""
    corpus = load_dataset_dir(data_dir)
    results = {}
    for rec in recommendations_from_dict(read_json(recommendations)):
        gt = corpus.ground_truth.get(rec.report_id)
        if gt is None:
            logger.warning('Report %s has no ground truth; skipped', rec.report_id)
            continue
        results.setdefault(rec.approach, []).append(evaluate_query(rec, gt))
    if not results:
        raise TriageLabError(f'{recommendations}: no recommendation matches an experimental report')
    metrics = {a: aggregate(rs, state.config.k_max) for a, rs in results.items()}
    click.echo(performance_table(sorted(metrics.items(), key=lambda kv: kv[0].value)), nl=False)


@cli.command()
@data_option
@click.pass_obj
def experiment(state, data_dir):
    """Run the full protocol and write experiment.json, experiment.txt and manifest.json."""
    started = time.monotonic()
    corpus = load_dataset_dir(data_dir)
    report = run_lupin_experiment(corpus, state.config)
    datasets = [p for p in dataset_paths(data_dir).values() if p]
    manifest = build_manifest(state.config, datasets, __version__, time.monotonic() - started)
    os.makedirs(state.out, exist_ok=True)
    paths = write_experiment(state.out, report, manifest)
    with open(paths['text'], encoding='utf-8') as fh:
        click.echo(fh.read(), nl=False)


@cli.command()
@click.argument('report_path', type=click.Path(dir_okay=False))
def report(report_path):
    """Render an experiment.json file as text tables."""
    click.echo(render_experiment(load_report(report_path)), nl=False)


@cli.command()
@click.option('--bugs', default=120, show_default=True, type=click.IntRange(min=10))
@click.pass_obj
def synth(state, bugs):
    """Write the generated mini dataset into --out."""
    paths = write_dataset(state.out, seed=state.seed, bug_count=bugs)
    for path in paths.values():
        click.echo(path)


def main(argv=None):
    """Entry point; returns 0 on success, 1 on usage errors, 2 on data errors."""
    try:
        rv = cli.main(args=argv, prog_name='triage-lab', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo('Aborted!', err=True)
        return 1
    except (TriageLabError, OSError) as e:
        logger.debug('Command failed', exc_info=True)
        click.echo(f'error: {e}', err=True)
        return 2
    return rv if isinstance(rv, int) else 0
