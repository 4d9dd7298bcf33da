# triage_lab/recommenders.py
"""FREQ, TEXTSIM and L2R developer recommenders over a per-query history view."""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from triage_lab.index import bm25, bm25_document, build_index, localize, vsm_similarity, cosine_tfidf
from triage_lab.models import (
    Approach, DeveloperProfile, L2RFeatureVector, L2R_FEATURE_NAMES, LinearRankModel,
    RankedRecommendation, TemporalLeakError, TrainingError,
)
from triage_lab.utils import rank_scores

logger = logging.getLogger(__name__)


def default_boundary_check(ts, boundary):
    if ts >= boundary:
        raise TemporalLeakError(f'artifact dated {ts.isoformat()} is not before {boundary.isoformat()}')


@dataclass
class _QueryScores:
    localized: list
    file_bm25: dict
    file_vsm: dict = field(default_factory=dict)
    report_vsm: dict = field(default_factory=dict)


@dataclass
class HistoryContext:
    """Everything a recommender may see for one query: artifacts strictly before `boundary`."""
    boundary: datetime
    past_reports: tuple
    fixers: dict
    report_tokens: dict
    profiles: dict
    report_index: object
    code_index: object
    code_tokens: dict
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    localizer_depth: int = 10
    recent_days: int = 90
    _scores: dict = field(default_factory=dict, repr=False)

    @property
    def candidates(self):
        return sorted(self.profiles)

    def profile(self, developer_id):
        return self.profiles.get(developer_id) or DeveloperProfile(developer_id)

    def query_scores(self, query):
        key = query.tokens
        scores = self._scores.get(key)
        if scores is None:
            scores = _QueryScores(
                localized=localize(query, self.code_index, self.localizer_depth),
                file_bm25={d.doc_id: d.score for d in bm25(query.tokens, self.code_index, self.bm25_k1, self.bm25_b)},
            )
            self._scores[key] = scores
        return scores

    def file_vsm(self, query, path):
        cache = self.query_scores(query).file_vsm
        if path not in cache:
            cache[path] = vsm_similarity(query.tokens, self.code_tokens[path], self.code_index)
        return cache[path]

    def report_vsm(self, query, report_id):
        cache = self.query_scores(query).report_vsm
        if report_id not in cache:
            cache[report_id] = vsm_similarity(query.tokens, self.report_tokens[report_id], self.report_index)
        return cache[report_id]


def build_history(corpus, report, config=None, boundary_check=None):
    check = boundary_check or default_boundary_check
    boundary = report.created_at

    # a past report counts once its last linked fix commit predates the boundary
    past_reports, fixed_at = [], {}
    for past in corpus.experimental:
        if past.created_at >= boundary:
            break
        fixed = corpus.fixed_at(past.id)
        if fixed is None or fixed >= boundary:
            continue
        check(past.created_at, boundary)
        check(fixed, boundary)
        past_reports.append(past)
        fixed_at[past.id] = fixed

    fixers = {r.id: corpus.ground_truth[r.id] for r in past_reports}
    report_tokens = {r.id: corpus.queries[r.id].tokens for r in past_reports}

    profiles = {}

    def profile(dev):
        if dev not in profiles:
            profiles[dev] = DeveloperProfile(dev)
        return profiles[dev]

    for past in past_reports:
        for dev in sorted(fixers[past.id].developers):
            p = profile(dev)
            p.fixed_report_ids.append(past.id)
            p.fix_timestamps.append(fixed_at[past.id])
            p.report_profile_tokens.extend(report_tokens[past.id])

    for commit in sorted(corpus.commits.values(), key=lambda c: (c.timestamp, c.sha)):
        if commit.timestamp >= boundary:
            break
        check(commit.timestamp, boundary)
        profile(commit.author_id).commit_count += 1
        for dev in sorted(commit.developers):
            profile(dev).touched_files.update(commit.changed_files)

    code_tokens = {}
    for path, code_file in corpus.code_files.items():
        first = code_file.first_touched
        if first is not None and first >= boundary:
            continue
        if first is not None:
            check(first, boundary)
        code_tokens[path] = code_file.content_tokens

    for p in profiles.values():
        for path in sorted(p.touched_files):
            p.code_profile_tokens.extend(code_tokens.get(path, ()))

    kwargs = {}
    if config is not None:
        kwargs = dict(bm25_k1=config.bm25_k1, bm25_b=config.bm25_b,
                      localizer_depth=config.localizer_depth, recent_days=config.recent_days)
    return HistoryContext(
        boundary=boundary,
        past_reports=tuple(past_reports),
        fixers=fixers,
        report_tokens=report_tokens,
        profiles=profiles,
        report_index=build_index(report_tokens),
        code_index=build_index(code_tokens),
        code_tokens=code_tokens,
        **kwargs,
    )


def freq_recommend(query, context):
    counts = {dev: float(p.fix_count) for dev, p in context.profiles.items() if p.fix_count > 0}
    return RankedRecommendation(query.report_id, tuple(rank_scores(counts)), Approach.FREQ)


def textsim_recommend(query, past_reports_index, fixers):
    emitted, seen = [], set()
    for doc in cosine_tfidf(query.tokens, past_reports_index):
        developers = getattr(fixers[doc.doc_id], 'developers', fixers[doc.doc_id])
        for dev in sorted(developers):
            if dev not in seen:
                seen.add(dev)
                emitted.append((dev, doc.score))
    return RankedRecommendation(query.report_id, tuple(emitted), Approach.TEXTSIM)


def l2r_features(query, dev, ctx):
    """The 16 report/developer features; `dev` is a DeveloperProfile or a developer id."""
    if isinstance(dev, str):
        dev = ctx.profile(dev)
    scores = ctx.query_scores(query)
    tokens = query.tokens
    touched = dev.touched_files

    code_vsm = vsm_similarity(tokens, dev.code_profile_tokens, ctx.code_index)
    code_bm25 = bm25_document(tokens, dev.code_profile_tokens, ctx.code_index, ctx.bm25_k1, ctx.bm25_b)
    max_file_vsm = max((ctx.file_vsm(query, p) for p in touched if p in ctx.code_tokens), default=0.0)
    max_file_bm25 = max((scores.file_bm25.get(p, 0.0) for p in touched), default=0.0)

    hits = [d.score for d in scores.localized if d.doc_id in touched]
    total = sum(d.score for d in scores.localized)
    overlap = len(hits) / ctx.localizer_depth
    hit_sum = sum(hits)
    hit_max = max(hits, default=0.0)
    weighted = hit_sum / total if total > 0 else 0.0

    report_vsm = vsm_similarity(tokens, dev.report_profile_tokens, ctx.report_index)
    report_bm25 = bm25_document(tokens, dev.report_profile_tokens, ctx.report_index, ctx.bm25_k1, ctx.bm25_b)
    max_report_vsm = max((ctx.report_vsm(query, r) for r in dev.fixed_report_ids), default=0.0)

    if dev.fix_timestamps:
        days = (ctx.boundary - max(dev.fix_timestamps)).total_seconds() / 86400.0
        recency = 1.0 / (1.0 + days)
    else:
        recency = 0.0
    window_start = ctx.boundary - timedelta(days=ctx.recent_days)
    recent = sum(1 for ts in dev.fix_timestamps if ts >= window_start)

    return L2RFeatureVector((
        code_vsm, code_bm25, max_file_vsm, max_file_bm25,
        overlap, hit_sum, hit_max, weighted,
        report_vsm, report_bm25, max_report_vsm, float(dev.fix_count),
        recency, float(recent), float(dev.commit_count), float(len(touched)),
    ))


def training_tuples(query, ground_truth, ctx, negatives=10, features=None):
    """(query id, features, relevant) tuples: every fixer plus the most frequent non-fixers."""
    features = features or {}

    def vector(dev):
        return features[dev] if dev in features else l2r_features(query, dev, ctx)

    relevant = sorted(getattr(ground_truth, 'developers', ground_truth))
    others = sorted((dev for dev in ctx.profiles if dev not in relevant),
                    key=lambda dev: (-ctx.profiles[dev].fix_count, dev))[:negatives]
    tuples = [(query.report_id, vector(dev), True) for dev in relevant]
    tuples += [(query.report_id, vector(dev), False) for dev in others]
    return tuples


def _as_array(vector):
    return np.asarray(getattr(vector, 'values', vector), dtype=float)


def ranksvm_train(tuples, rate=0.01, epochs=50, l2=1e-4, seed=0):
    """Pairwise hinge loss + l2 * |w|^2 minimised by seeded stochastic subgradient descent."""
    grouped = defaultdict(lambda: ([], []))
    for query_id, vector, relevant in tuples:
        grouped[query_id][0 if relevant else 1].append(_as_array(vector))

    diffs = [pos - neg for qid in sorted(grouped) for pos in grouped[qid][0] for neg in grouped[qid][1]]
    if not diffs:
        raise TrainingError('no query has both a relevant and a non-relevant tuple')

    pairs = np.vstack(diffs)
    w = np.zeros(pairs.shape[1])
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        hinge = 0.0
        for i in rng.permutation(len(pairs)):
            margin = float(pairs[i] @ w)
            grad = 2 * l2 * w
            if margin < 1:
                hinge += 1 - margin
                grad = grad - pairs[i]
            w = w - rate * grad
        history.append(hinge / len(pairs) + l2 * float(w @ w))

    logger.debug('Rank learner trained on %d pairs, final loss %.6f', len(pairs), history[-1] if history else 0.0)
    return LinearRankModel(
        weights=tuple(float(x) for x in w), rate=rate, epochs=epochs, l2=l2, seed=seed,
        loss_history=tuple(history),
    )


def zero_model(seed=0):
    return LinearRankModel(weights=(0.0,) * len(L2R_FEATURE_NAMES), rate=0.0, epochs=0, l2=0.0, seed=seed)


def score_features(model, features):
    return float(np.dot(np.asarray(model.weights), _as_array(features)))


def l2r_recommend(query, model, candidate_devs, ctx, features=None):
    """`features` may carry precomputed dev -> L2RFeatureVector for the same query and context."""
    scores = {}
    for dev in candidate_devs:
        vector = features[dev] if features and dev in features else l2r_features(query, dev, ctx)
        scores[dev] = score_features(model, vector)
    return RankedRecommendation(query.report_id, tuple(rank_scores(scores)), Approach.L2R)
