# triage_lab/evalkit.py
import logging

import numpy as np

from triage_lab.models import (
    Approach, BestApproachLabeling, CLASS_ORDER, DISTRIBUTION_CELLS, Metrics, ProtocolError, QueryResult,
)

logger = logging.getLogger(__name__)

K_MAX = 5

# Distribution cell for each set of tied best approaches.
_CELLS = {
    frozenset({Approach.L2R}): 'L2R',
    frozenset({Approach.TEXTSIM}): 'TEXTSIM',
    frozenset({Approach.FREQ}): 'FREQ',
    frozenset({Approach.L2R, Approach.TEXTSIM}): 'L2R/TEXTSIM',
    frozenset({Approach.L2R, Approach.FREQ}): 'L2R/FREQ',
    frozenset({Approach.TEXTSIM, Approach.FREQ}): 'TEXTSIM/FREQ',
    frozenset(CLASS_ORDER): 'ALL',
}


def _developers(ranked):
    return [d[0] if isinstance(d, (tuple, list)) else d for d in ranked]


def rank_of_first_hit(ranked_developers, ground_truth):
    """1-based position of the first ground-truth developer, or None for a MISS."""
    for position, dev in enumerate(_developers(ranked_developers), start=1):
        if dev in ground_truth:
            return position
    return None


def average_precision(ranked_developers, ground_truth):
    hits, total = 0, 0.0
    for position, dev in enumerate(_developers(ranked_developers), start=1):
        if dev in ground_truth:
            hits += 1
            total += hits / position
    return total / len(ground_truth) if ground_truth else 0.0


def evaluate_query(recommendation, ground_truth, approach=None):
    gt = getattr(ground_truth, 'developers', ground_truth)
    rank = rank_of_first_hit(recommendation.ranked_developers, gt)
    return QueryResult(
        report_id=recommendation.report_id,
        approach=approach or recommendation.approach,
        rank=rank,
        reciprocal_rank=1.0 / rank if rank else 0.0,
        average_precision=average_precision(recommendation.ranked_developers, gt),
    )


def aggregate(results, k_max=K_MAX):
    results = list(results)
    if not results:
        raise ValueError('cannot aggregate an empty result list')
    n = len(results)
    ranks = [r.rank for r in results if r.rank is not None]
    hits = tuple(sum(1 for r in ranks if r <= k) / n for k in range(1, k_max + 1))
    return Metrics(
        mrr=sum(r.reciprocal_rank for r in results) / n,
        map=sum(r.average_precision for r in results) / n,
        hits=hits,
        query_count=n,
        mean_rank=sum(ranks) / len(ranks) if ranks else None,
    )


def mean_metrics(runs):
    """Field-wise mean of Metrics computed on the same query set."""
    runs = list(runs)
    if not runs:
        raise ValueError('no runs to average')
    ranks = [m.mean_rank for m in runs if m.mean_rank is not None]
    return Metrics(
        mrr=float(np.mean([m.mrr for m in runs])),
        map=float(np.mean([m.map for m in runs])),
        hits=tuple(float(x) for x in np.mean([m.hits for m in runs], axis=0)),
        query_count=runs[0].query_count,
        mean_rank=float(np.mean(ranks)) if ranks else None,
    )


def _rank_key(rank):
    return rank if rank is not None else float('inf')


def best_approach_labels(ranks, seed=0):
    """ranks: report id -> {approach: rank or None}, iterated in the given (chronological) order."""
    rng = np.random.default_rng(seed)
    labels, excluded = {}, []
    distribution = {cell: 0 for cell in DISTRIBUTION_CELLS}
    for report_id, per_approach in ranks.items():
        finite = {a: r for a, r in per_approach.items() if r is not None}
        if not finite:
            excluded.append(report_id)
            continue
        best = min(finite.values())
        tied = [a for a in CLASS_ORDER if finite.get(a) == best]
        distribution[_CELLS[frozenset(tied)]] += 1
        labels[report_id] = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
    return BestApproachLabeling(labels=labels, distribution=distribution, excluded=tuple(excluded))


def _oracle_choice(per_approach):
    """Lowest rank, then higher AP, then class order."""
    return min(
        (a for a in CLASS_ORDER if a in per_approach),
        key=lambda a: (_rank_key(per_approach[a].rank), -per_approach[a].average_precision, CLASS_ORDER.index(a)),
    )


def oracle_labels(results):
    """results: report id -> {approach: QueryResult}. Returns report id -> approach the oracle dispatches to."""
    return {rid: _oracle_choice(per_approach) for rid, per_approach in results.items()}


def oracle_results(results):
    chosen = oracle_labels(results)
    out = []
    for rid, per_approach in results.items():
        r = per_approach[chosen[rid]]
        out.append(QueryResult(rid, Approach.ORACLE, r.rank, r.reciprocal_rank, r.average_precision))
    return out


def oracle_metrics(results, k_max=K_MAX):
    if not results:
        raise ValueError('cannot compute oracle metrics without queries')
    return aggregate(oracle_results(results), k_max)


def check_oracle_dominance(oracle, per_approach):
    """MRR and H@k dominance always holds; MAP can fall short when ground-truth sets hold several developers."""
    for approach, metrics in per_approach.items():
        if oracle.mrr < metrics.mrr or any(o < m for o, m in zip(oracle.hits, metrics.hits)):
            raise ProtocolError(f'oracle fails to dominate {approach} on MRR/H@k')
        if oracle.map < metrics.map:
            logger.warning('Oracle MAP %.4f below %s MAP %.4f', oracle.map, approach, metrics.map)
