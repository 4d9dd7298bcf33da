# triage_lab/reporting.py
"""JSON and text renderings of recommendations, metrics, experiment reports and run manifests."""
import os

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from triage_lab.classifiers import ClassifierKind
from triage_lab.models import (
    Approach, ClassificationReport, DISTRIBUTION_CELLS, ExperimentReport, Metrics, RankedRecommendation,
    RunManifest,
)
from triage_lab.utils import file_digest, read_json, write_json

TEMPLATE_DIR = os.path.join(os.path.dirname(__file__), 'templates')


def pct(value):
    return '-' if value is None else f'{value * 100:.1f}'


def num(value):
    return '-' if value is None else f'{value:.2f}'


_env = Environment(
    loader=FileSystemLoader(TEMPLATE_DIR),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    autoescape=False,
)
_env.filters['pct'] = pct
_env.filters['num'] = num


def render_template(name, **context):
    return _env.get_template(name).render(**context)


def _metrics_dict(metrics):
    return metrics.to_dict() if isinstance(metrics, Metrics) else dict(metrics)


def performance_table(rows, title='Bug assignment performance'):
    """rows: (name, Metrics or Metrics dict) pairs in display order."""
    rows = [{'name': getattr(name, 'value', name), 'metrics': _metrics_dict(m)} for name, m in rows]
    k_max = 0
    while rows and f'H@{k_max + 1}' in rows[0]['metrics']:
        k_max += 1
    columns = ['AR', 'MRR', 'MAP', *(f'H@{k}' for k in range(1, k_max + 1))]
    query_count = rows[0]['metrics']['queries'] if rows else 0
    return render_template('performance.txt.j2', title=title, columns=columns, rows=rows,
                           k_max=k_max, query_count=query_count)


def distribution_table(distribution, excluded=0, title='Reports for which each approach performs best'):
    total = sum(distribution.get(cell, 0) for cell in DISTRIBUTION_CELLS)
    return render_template(
        'distribution.txt.j2', title=title, cells=DISTRIBUTION_CELLS,
        distribution={cell: distribution.get(cell, 0) for cell in DISTRIBUTION_CELLS},
        total=total, excluded=excluded, share=lambda n: n / total if total else 0.0,
    )


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def _by_kind(mapping):
    """Mapping items in ClassifierKind order; unknown kinds go last, by name."""
    order = [k.value for k in ClassifierKind]

    def key(item):
        return (order.index(item[0]) if item[0] in order else len(order), item[0])
    return sorted(mapping.items(), key=key)


def classification_table(classification, selected=None, title='Best-approach classifiers'):
    rows = []
    for kind, runs in _by_kind(classification):
        runs = [r.to_dict() if isinstance(r, ClassificationReport) else r for r in runs if r is not None]
        rows.append({
            'kind': kind,
            'precision': _mean(r['weighted_precision'] for r in runs),
            'recall': _mean(r['weighted_recall'] for r in runs),
            'f1': _mean(r['weighted_f1'] for r in runs),
            'runs': len(runs),
        })
    return render_template('classification.txt.j2', title=title, rows=rows, selected=selected)


def recommendations_to_dict(recommendations):
    return {'recommendations': [rec.to_dict() for rec in recommendations]}


def recommendations_from_dict(data):
    return [RankedRecommendation.from_dict(item) for item in data['recommendations']]


def _classification_from_dict(data):
    if data is None:
        return None
    classes = tuple(Approach(c) if c in Approach.__members__ else c for c in data['classes'])
    return ClassificationReport(
        classes=classes,
        precision=tuple(data['precision']),
        recall=tuple(data['recall']),
        f1=tuple(data['f1']),
        support=tuple(data['support']),
        weighted_precision=data['weighted_precision'],
        weighted_recall=data['weighted_recall'],
        weighted_f1=data['weighted_f1'],
        confusion=tuple(tuple(row) for row in data['confusion']),
    )


def experiment_report_to_dict(report):
    def metrics_map(mapping):
        return {getattr(k, 'value', k): m.to_dict() for k, m in mapping.items()}

    return {
        'folds': list(report.fold_sizes),
        'queries': {'evaluation': report.evaluation_count, 'train': report.train_count, 'test': report.test_count},
        'seeds': list(report.seeds),
        'evaluation_metrics': metrics_map(report.evaluation_metrics),
        'approach_metrics': metrics_map(report.approach_metrics),
        'oracle_metrics': report.oracle_metrics.to_dict(),
        'lupin_metrics': metrics_map(report.lupin_metrics),
        'lupin_runs': {k: [m.to_dict() for m in runs] for k, runs in report.lupin_runs.items()},
        'classification': {k: [r.to_dict() if r is not None else None for r in runs]
                           for k, runs in report.classification.items()},
        'hyperparameters': {k: list(runs) for k, runs in report.hyperparameters.items()},
        'selected_classifier': report.selected_classifier,
        'distribution': dict(report.distribution),
        'labeled_count': report.labeled_count,
        'excluded_count': report.excluded_count,
        'class_shares': list(report.class_shares),
        'test_predictions': {k: [{rid: getattr(a, 'value', a) for rid, a in run.items()} for run in runs]
                             for k, runs in report.test_predictions.items()},
    }


def experiment_report_from_dict(data):
    def metrics_map(mapping):
        return {k: Metrics.from_dict(m) for k, m in mapping.items()}

    return ExperimentReport(
        fold_sizes=list(data['folds']),
        evaluation_count=data['queries']['evaluation'],
        train_count=data['queries']['train'],
        test_count=data['queries']['test'],
        seeds=list(data['seeds']),
        evaluation_metrics=metrics_map(data['evaluation_metrics']),
        approach_metrics=metrics_map(data['approach_metrics']),
        oracle_metrics=Metrics.from_dict(data['oracle_metrics']),
        lupin_metrics=metrics_map(data['lupin_metrics']),
        lupin_runs={k: [Metrics.from_dict(m) for m in runs] for k, runs in data['lupin_runs'].items()},
        classification={k: [_classification_from_dict(r) for r in runs]
                        for k, runs in data['classification'].items()},
        hyperparameters={k: list(runs) for k, runs in data['hyperparameters'].items()},
        selected_classifier=data['selected_classifier'],
        distribution=dict(data['distribution']),
        labeled_count=data['labeled_count'],
        excluded_count=data['excluded_count'],
        class_shares=list(data['class_shares']),
        test_predictions={k: [{rid: Approach(a) for rid, a in run.items()} for run in runs]
                          for k, runs in data.get('test_predictions', {}).items()},
    )


def render_experiment(data):
    """Text rendering of an experiment report in its JSON form."""
    approaches = [a.value for a in (Approach.FREQ, Approach.TEXTSIM, Approach.L2R)]
    test_rows = [(a, data['approach_metrics'][a]) for a in approaches]
    test_rows += [(f'Lupin-{k}', m) for k, m in _by_kind(data['lupin_metrics'])]
    test_rows.append(('Max', data['oracle_metrics']))
    return render_template(
        'experiment.txt.j2',
        folds=data['folds'],
        queries=data['queries'],
        seeds=data['seeds'],
        class_shares=data['class_shares'],
        evaluation_table=performance_table(
            [(a, data['evaluation_metrics'][a]) for a in approaches],
            title='Bug assignment performance on the evaluation folds').rstrip('\n'),
        test_table=performance_table(test_rows, title='Bug assignment performance on the test split').rstrip('\n'),
        classification_table=classification_table(
            data['classification'], data['selected_classifier']).rstrip('\n'),
        distribution_table=distribution_table(data['distribution'], data['excluded_count']).rstrip('\n'),
    )


def build_manifest(config, dataset_paths, version, duration_seconds):
    return RunManifest(
        config_hash=config.digest(),
        datasets={str(path): file_digest(path) for path in sorted(str(p) for p in dataset_paths)},
        seeds=tuple(config.seeds),
        version=version,
        duration_seconds=round(float(duration_seconds), 3),
    )


def manifest_to_dict(manifest):
    return {
        'config_hash': manifest.config_hash,
        'datasets': dict(manifest.datasets),
        'seeds': list(manifest.seeds),
        'version': manifest.version,
        'duration_seconds': manifest.duration_seconds,
    }


def write_experiment(out_dir, report, manifest):
    """Write experiment.json, experiment.txt and manifest.json; returns their paths."""
    data = experiment_report_to_dict(report)
    paths = {
        'json': os.path.join(out_dir, 'experiment.json'),
        'text': os.path.join(out_dir, 'experiment.txt'),
        'manifest': os.path.join(out_dir, 'manifest.json'),
    }
    write_json(paths['json'], data)
    with open(paths['text'], 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(render_experiment(data))
    write_json(paths['manifest'], manifest_to_dict(manifest))
    return paths


def load_report(path):
    return read_json(path)
