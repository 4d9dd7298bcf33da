# triage_lab/metafeatures.py
"""Pre-retrieval query-quality and developer-activity features for one bug report."""
import math
from collections import Counter

import numpy as np

from triage_lab.index import document_cosine
from triage_lab.models import META_FEATURE_NAMES, MetaFeatureVector
from triage_lab.utils import export_rows_to_csv


def _aggregates(values):
    """(avg, max, stdev, sum) of a list; zeros when empty."""
    if not values:
        return 0.0, 0.0, 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.max()), float(arr.std()), float(arr.sum())


def _present_terms(query_tokens, index):
    return sorted(t for t in set(query_tokens) if index.df.get(t, 0) > 0)


def _scq(index, term):
    return (1 + math.log(index.cf[term])) * index.idf(term)


def _term_variance(index, term):
    weights = [index.weight(term, tf) for _, tf in index.postings[term]]
    return float(np.var(weights))


def coherency_score(query_tokens, index, pair_cap=100, seed=0):
    """Mean cosine over pairs of documents containing a query term; pairs are sampled when too many."""
    docs = sorted(index.docs_containing(set(query_tokens)))
    m = len(docs)
    if m < 2:
        return 0.0
    total_pairs = m * (m - 1) // 2
    if total_pairs <= pair_cap:
        pairs = [(docs[i], docs[j]) for i in range(m) for j in range(i + 1, m)]
    else:
        rng = np.random.default_rng(seed)
        chosen = set()
        while len(chosen) < pair_cap:
            i, j = sorted(int(x) for x in rng.choice(m, size=2, replace=False))
            chosen.add((i, j))
        pairs = [(docs[i], docs[j]) for i, j in sorted(chosen)]
    sims = [document_cosine(index, a, b) for a, b in pairs]
    return min(1.0, max(0.0, float(np.mean(sims))))


def developer_features(profiles):
    counts = [p.fix_count for p in profiles.values() if p.fix_count > 0]
    if not counts:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    arr = np.asarray(counts, dtype=float)
    shares = arr / arr.sum()
    entropy = float(-(shares * np.log(shares)).sum())
    return float(len(counts)), float(arr.mean()), float(np.median(arr)), float(arr.max()), max(0.0, entropy)


def compute_meta_features(query, report_index, code_index, dev_profiles, pair_cap=100, seed=0):
    tokens = list(query.tokens)

    # specificity, over the past-report collection
    terms = _present_terms(tokens, report_index)
    idfs = [report_index.idf(t) for t in terms]
    avg_idf, max_idf, dev_idf, _ = _aggregates(idfs)
    T = report_index.total_tokens
    ictfs = [math.log(T / report_index.cf[t]) for t in terms]
    avg_ictf, max_ictf, dev_ictf, _ = _aggregates(ictfs)

    scs = 0.0
    if terms and tokens:
        q_tf = Counter(tokens)
        for t in terms:
            p_q = q_tf[t] / len(tokens)
            p_c = report_index.cf[t] / T
            scs += p_q * math.log(p_q / p_c)

    qs = len(report_index.docs_containing(terms)) / report_index.N if report_index.N else 0.0
    avg_var, max_var, _, sum_var = _aggregates([_term_variance(report_index, t) for t in terms])

    # similarity, against past reports and past code files
    avg_scq_r, max_scq_r, _, sum_scq_r = _aggregates([_scq(report_index, t) for t in terms])
    code_terms = _present_terms(tokens, code_index)
    avg_scq_c, max_scq_c, _, sum_scq_c = _aggregates([_scq(code_index, t) for t in code_terms])

    cs = coherency_score(terms, report_index, pair_cap=pair_cap, seed=seed)

    active, avg_fixes, median_fixes, max_fixes, entropy = developer_features(dev_profiles)

    return MetaFeatureVector((
        avg_idf, max_idf, dev_idf, avg_ictf, max_ictf, dev_ictf, scs, min(1.0, qs),
        avg_var, max_var, sum_var,
        avg_scq_r, max_scq_r, sum_scq_r,
        avg_scq_c, max_scq_c, sum_scq_c,
        cs,
        active, avg_fixes, median_fixes, max_fixes, entropy,
    ))


def meta_features_for(query, ctx, pair_cap=100, seed=0):
    return compute_meta_features(query, ctx.report_index, ctx.code_index, ctx.profiles, pair_cap=pair_cap, seed=seed)


def export_feature_csv(rows):
    """rows: iterable of (report_id, MetaFeatureVector)."""
    header = ['report_id', *META_FEATURE_NAMES]
    return export_rows_to_csv(header, ([rid, *(float(v) for v in vec.values)] for rid, vec in rows))
