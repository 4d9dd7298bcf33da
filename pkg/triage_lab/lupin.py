# triage_lab/lupin.py
"""Experiment orchestration: the chronological L2R protocol and the Lupin meta-recommender."""
import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

from triage_lab.classifiers import (
    CV_FOLDS, ClassifierKind, ClassifierModel, MajorityClassifier, Standardizer, classification_report,
    expand_grid, feature_matrix, grid_search_chronological, label_indices, train_classifier,
)
from triage_lab.evalkit import (
    aggregate, best_approach_labels, check_oracle_dominance, evaluate_query, mean_metrics, oracle_metrics,
)
from triage_lab.metafeatures import meta_features_for
from triage_lab.models import (
    Approach, CLASS_ORDER, ExperimentReport, LabeledExample, MetaFeatureVector, ProtocolError,
    QueryResult, RankedRecommendation, TrainingError,
)
from triage_lab.recommenders import (
    build_history, freq_recommend, l2r_features, l2r_recommend, ranksvm_train, textsim_recommend,
    training_tuples, zero_model,
)
from triage_lab.utils import chronological_folds

logger = logging.getLogger(__name__)


@dataclass
class QueryRecord:
    """One evaluation query with everything later stages need, computed once."""
    report_id: str
    created_at: datetime
    ground_truth: frozenset
    features: MetaFeatureVector
    recommendations: dict  # Approach -> RankedRecommendation
    results: dict = field(default_factory=dict)  # Approach -> QueryResult

    def __post_init__(self):
        if not self.results:
            self.results = {a: evaluate_query(rec, self.ground_truth, a) for a, rec in self.recommendations.items()}


@dataclass
class ProtocolResult:
    folds: list  # report ids per fold
    records: list  # QueryRecord for every evaluation query, chronological
    models: list = field(default_factory=list)  # LinearRankModel per trained fold

    @property
    def fold_sizes(self):
        return [len(f) for f in self.folds]

    def by_id(self):
        return {r.report_id: r for r in self.records}


@dataclass
class _Prepared:
    report: object
    query: object
    candidates: list
    features: dict
    tuples: list
    freq: RankedRecommendation
    textsim: RankedRecommendation
    meta: MetaFeatureVector


def _prepare(corpus, report, config, boundary_check):
    ctx = build_history(corpus, report, config, boundary_check)
    query = corpus.queries[report.id]
    gt = corpus.ground_truth[report.id]
    candidates = ctx.candidates
    devs = sorted(set(candidates) | set(gt.developers))
    features = {dev: l2r_features(query, dev, ctx) for dev in devs}
    return _Prepared(
        report=report,
        query=query,
        candidates=candidates,
        features=features,
        tuples=training_tuples(query, gt, ctx, config.negatives_per_query, features),
        freq=freq_recommend(query, ctx),
        textsim=textsim_recommend(query, ctx.report_index, ctx.fixers),
        meta=meta_features_for(query, ctx, pair_cap=config.cs_pair_cap),
    )


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_l2r_protocol(corpus, config, boundary_check=None):
    reports = list(corpus.experimental)
    if len(reports) < config.fold_count:
        raise ProtocolError(f'{len(reports)} experimental reports cannot fill {config.fold_count} folds')
    folds = chronological_folds(reports, config.fold_count)
    prepared = {p.report.id: p for p in _map(lambda r: _prepare(corpus, r, config, boundary_check),
                                              reports, config.jobs)}

    records, models = [], []
    for x in range(1, config.fold_count):
        tuples = [t for fold in folds[:x] for r in fold for t in prepared[r.id].tuples]
        try:
            model = ranksvm_train(tuples, rate=config.ranker_rate, epochs=config.ranker_epochs,
                                  l2=config.ranker_l2, seed=config.ranker_seed)
        except TrainingError:
            logger.warning('No valid training pairs before fold %d; scoring it with a zero model', x + 1)
            model = zero_model(config.ranker_seed)
        models.append(model)
        for report in folds[x]:
            p = prepared[report.id]
            l2r = l2r_recommend(p.query, model, p.candidates, None, features=p.features)
            records.append(QueryRecord(
                report_id=report.id,
                created_at=report.created_at,
                ground_truth=corpus.ground_truth[report.id].developers,
                features=p.meta,
                recommendations={Approach.FREQ: p.freq, Approach.TEXTSIM: p.textsim, Approach.L2R: l2r},
            ))
        logger.info('Fold %d/%d scored (%d training tuples)', x + 1, config.fold_count, len(tuples))
    return ProtocolResult(folds=[[r.id for r in fold] for fold in folds], records=records, models=models)


def split_chronological(records, train_fraction):
    n_train = int(len(records) * train_fraction)
    if n_train == 0 or n_train == len(records):
        raise ProtocolError(f'{len(records)} queries give an empty side in a {train_fraction:.0%} split')
    return records[:n_train], records[n_train:]


def dispatch(records, predictions):
    """Lupin's per-query result is exactly the dispatched approach's result."""
    out = []
    for record in records:
        r = record.results[predictions[record.report_id]]
        out.append(QueryResult(record.report_id, Approach.LUPIN, r.rank, r.reciprocal_rank, r.average_precision))
    return out


def _majority_model(kind, examples, seed):
    X = feature_matrix(e.features for e in examples)
    estimator = MajorityClassifier().fit(X, label_indices([e.label for e in examples]))
    return ClassifierModel(kind=kind, estimator=estimator, standardizer=Standardizer.fit(X), seed=seed)


def fit_classifier(kind, examples, grid, seed):
    """Grid-search then retrain on every example; a single-label history falls back to its label."""
    if not examples:
        raise ProtocolError(f'{kind}: no labeled training queries')
    if len({e.label for e in examples}) < 2:
        logger.warning('%s: training labels hold one class; predicting it everywhere', kind)
        return _majority_model(kind, examples, seed), {}
    points = expand_grid(grid or [{}]) or [{}]
    if len(examples) < CV_FOLDS:
        logger.warning('%s: %d training examples are too few to cross-validate; using %s',
                       kind, len(examples), points[0])
        hp = points[0]
    else:
        hp = grid_search_chronological(examples, kind, points, seed)
    return train_classifier(kind, examples, hp, seed), hp


@dataclass
class RunOutcome:
    seed: int
    labeling: object
    metrics: dict  # kind -> Metrics
    reports: dict  # kind -> ClassificationReport
    hyperparameters: dict  # kind -> dict
    predictions: dict  # kind -> {report id: Approach}


def run_once(seed, train_records, test_records, ranks, config):
    labeling = best_approach_labels(ranks, seed)
    examples = [LabeledExample(r.report_id, r.features, labeling.labels[r.report_id], r.created_at)
                for r in train_records if r.report_id in labeling.labels]
    labeled_test = [r for r in test_records if r.report_id in labeling.labels]

    outcome = RunOutcome(seed, labeling, {}, {}, {}, {})
    for kind in ClassifierKind:
        model, hp = fit_classifier(kind.value, examples, config.classifier_grids.get(kind.value), seed)
        predictions = dict(zip((r.report_id for r in test_records),
                               model.predict_many(r.features for r in test_records)))
        outcome.metrics[kind.value] = aggregate(dispatch(test_records, predictions), config.k_max)
        outcome.hyperparameters[kind.value] = hp
        outcome.predictions[kind.value] = predictions
        if labeled_test:
            outcome.reports[kind.value] = classification_report(
                [predictions[r.report_id] for r in labeled_test],
                [labeling.labels[r.report_id] for r in labeled_test])
        logger.info('Run seed=%d %s: MRR %.4f', seed, kind.value, outcome.metrics[kind.value].mrr)
    return outcome


def _run_outcomes(train_records, test_records, ranks, config):
    args = [(seed, train_records, test_records, ranks, config) for seed in config.seeds]
    if config.jobs and config.jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(args))) as pool:
            return list(pool.map(run_once, *zip(*args)))
    return [run_once(*a) for a in args]


def run_lupin_experiment(corpus, config, protocol=None):
    protocol = protocol or run_l2r_protocol(corpus, config)
    records = protocol.records
    train_records, test_records = split_chronological(records, config.train_fraction)

    ranks = {r.report_id: {a: r.results[a].rank for a in CLASS_ORDER} for r in records}
    test_results = {r.report_id: {a: r.results[a] for a in CLASS_ORDER} for r in test_records}

    approach_metrics = {a.value: aggregate([r.results[a] for r in test_records], config.k_max) for a in CLASS_ORDER}
    evaluation_metrics = {a.value: aggregate([r.results[a] for r in records], config.k_max) for a in CLASS_ORDER}
    oracle = oracle_metrics(test_results, config.k_max)
    check_oracle_dominance(oracle, approach_metrics)

    outcomes = _run_outcomes(train_records, test_records, ranks, config)

    kinds = [k.value for k in ClassifierKind]
    lupin_runs = {k: [o.metrics[k] for o in outcomes] for k in kinds}
    lupin_metrics = {k: mean_metrics(runs) for k, runs in lupin_runs.items()}
    # highest mean MRR; ties keep the first kind
    selected = max(kinds, key=lambda k: (lupin_metrics[k].mrr, -kinds.index(k)))

    labeling = outcomes[0].labeling
    report = ExperimentReport(
        fold_sizes=protocol.fold_sizes,
        evaluation_count=len(records),
        train_count=len(train_records),
        test_count=len(test_records),
        seeds=list(config.seeds),
        evaluation_metrics=evaluation_metrics,
        approach_metrics=approach_metrics,
        oracle_metrics=oracle,
        lupin_metrics=lupin_metrics,
        lupin_runs=lupin_runs,
        classification={k: [o.reports.get(k) for o in outcomes] for k in kinds},
        hyperparameters={k: [o.hyperparameters[k] for o in outcomes] for k in kinds},
        selected_classifier=selected,
        distribution=dict(labeling.distribution),
        labeled_count=labeling.total,
        excluded_count=len(labeling.excluded),
        class_shares=[o.labeling.class_shares() for o in outcomes],
        test_predictions={k: [o.predictions[k] for o in outcomes] for k in kinds},
    )
    logger.info('Experiment finished: selected %s (mean MRR %.4f, oracle %.4f)',
                selected, lupin_metrics[selected].mrr, oracle.mrr)
    return report


def default_recommenders(model):
    return {
        Approach.FREQ: lambda query, ctx: freq_recommend(query, ctx),
        Approach.TEXTSIM: lambda query, ctx: textsim_recommend(query, ctx.report_index, ctx.fixers),
        Approach.L2R: lambda query, ctx: l2r_recommend(query, model, ctx.candidates, ctx),
    }


def lupin_recommend(query, trained_classifier, recommenders, ctx, pair_cap=100):
    features = meta_features_for(query, ctx, pair_cap=pair_cap)
    approach = trained_classifier.predict(features)
    delegated = recommenders[approach](query, ctx)
    return RankedRecommendation(query.report_id, delegated.ranked_developers, Approach.LUPIN, dispatched=approach)
