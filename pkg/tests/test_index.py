# tests/test_index.py
import math

import numpy as np
import pytest

from triage_lab.index import bm25, bm25_document, build_index, cosine_tfidf, localize, vsm_similarity
from triage_lab.models import DuplicateDocumentError, Query


def test_empty_index():
    index = build_index({})
    assert index.N == 0
    assert cosine_tfidf(['a'], index) == []
    assert bm25(['a'], index) == []


def test_index_statistics():
    index = build_index({'d1': ['a', 'b'], 'd2': ['a']})
    assert index.N == 2
    assert index.df == {'a': 2, 'b': 1}
    assert index.avg_doc_len == 1.5


def test_repeated_token_counts_term_frequency():
    index = build_index({'d': ['a', 'a']})
    assert index.postings['a'] == [('d', 2)]


def test_duplicate_document_id_is_rejected():
    with pytest.raises(DuplicateDocumentError):
        build_index([('d1', ['a']), ('d1', ['b'])])


def test_query_identical_to_isolated_doc_scores_one():
    index = build_index({'d1': ['x', 'y'], 'd2': ['p', 'q'], 'd3': ['r']})
    ranked = cosine_tfidf(['x', 'y'], index)
    assert ranked[0].doc_id == 'd1'
    assert ranked[0].score == pytest.approx(1.0)


def test_query_without_indexed_terms_retrieves_nothing():
    index = build_index({'d1': ['a'], 'd2': ['b']})
    assert cosine_tfidf(['zzz'], index) == []


def test_single_term_documents_tie_by_doc_id():
    index = build_index({'d2': ['a', 'a'], 'd1': ['a'], 'd3': ['b'], 'd4': ['c']})
    ranked = cosine_tfidf(['a'], index)
    assert [d.doc_id for d in ranked] == ['d1', 'd2']
    assert all(d.score == pytest.approx(1.0) for d in ranked)


def test_cosine_never_exceeds_one():
    rng = np.random.default_rng(3)
    vocab = [f't{i}' for i in range(12)]
    docs = {f'd{i}': [vocab[j] for j in rng.integers(12, size=int(rng.integers(1, 9)))] for i in range(30)}
    index = build_index(docs)
    for _ in range(20):
        query = [vocab[j] for j in rng.integers(12, size=4)]
        assert all(0 < d.score <= 1 + 1e-12 for d in cosine_tfidf(query, index))


def test_bm25_single_document_hand_computed():
    index = build_index({'d1': ['a']})
    ranked = bm25(['a'], index, k1=1.2, b=0.75)
    assert ranked[0].score == pytest.approx(math.log(4 / 3), abs=1e-9)
    assert ranked[0].score == pytest.approx(0.28768, abs=1e-5)


def test_bm25_absent_term_contributes_nothing():
    index = build_index({'d1': ['a', 'b'], 'd2': ['b']})
    with_absent = {d.doc_id: d.score for d in bm25(['a', 'missing'], index)}
    without = {d.doc_id: d.score for d in bm25(['a'], index)}
    assert with_absent == without


def test_bm25_grows_with_term_frequency():
    index = build_index({'d1': ['a', 'x', 'y'], 'd2': ['a', 'a', 'y'], 'd3': ['z', 'z', 'z']})
    scores = {d.doc_id: d.score for d in bm25(['a'], index)}
    assert scores['d2'] > scores['d1'] > 0


def test_bm25_rejects_bad_parameters():
    index = build_index({'d1': ['a']})
    with pytest.raises(ValueError):
        bm25(['a'], index, k1=-1)
    with pytest.raises(ValueError):
        bm25(['a'], index, b=1.5)


def test_bm25_document_matches_indexed_score():
    index = build_index({'d1': ['a', 'b'], 'd2': ['b', 'c', 'c']})
    indexed = {d.doc_id: d.score for d in bm25(['a', 'c'], index)}
    assert bm25_document(['a', 'c'], ['b', 'c', 'c'], index) == pytest.approx(indexed['d2'])


def test_vsm_similarity_of_identical_token_lists_is_one():
    index = build_index({'d1': ['a', 'b'], 'd2': ['c']})
    assert vsm_similarity(['a', 'b'], ['a', 'b'], index) == pytest.approx(1.0)
    assert vsm_similarity(['a'], [], index) == 0.0


def test_localize_puts_verbatim_file_first():
    code = build_index({'f1.py': ['parse', 'token'], 'f2.py': ['render', 'canvas'], 'f3.py': ['parse', 'canvas']})
    ranked = localize(Query('q', ('render', 'canvas')), code)
    assert ranked[0].doc_id == 'f2.py'


def test_localize_empty_query():
    code = build_index({'f1.py': ['parse']})
    assert localize(Query('q', ()), code) == []


def test_localize_depth_one_keeps_best_file():
    code = build_index({'a.py': ['x', 'y'], 'b.py': ['x'], 'c.py': ['y', 'z', 'z'], 'd.py': ['w']})
    full = localize(Query('q', ('x', 'y')), code, n=10)
    assert len(full) == 3
    assert localize(Query('q', ('x', 'y')), code, n=1) == full[:1]
