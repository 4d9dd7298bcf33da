# triage_lab/index.py
import math
from collections import Counter
from dataclasses import dataclass

from triage_lab.models import DuplicateDocumentError
from triage_lab.utils import rank_scores

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float


class InvertedIndex:
    """Term statistics over a fixed set of token documents. Immutable once built."""

    def __init__(self, docs):
        self.doc_tf = {}
        for doc_id, tokens in docs:
            if doc_id in self.doc_tf:
                raise DuplicateDocumentError(f'duplicate document id {doc_id!r}')
            self.doc_tf[doc_id] = Counter(tokens)

        self.N = len(self.doc_tf)
        self.doc_len = {d: sum(tf.values()) for d, tf in self.doc_tf.items()}
        self.total_tokens = sum(self.doc_len.values())
        self.avg_doc_len = self.total_tokens / self.N if self.N else 0.0

        postings = {}
        for doc_id in sorted(self.doc_tf):
            for term, tf in self.doc_tf[doc_id].items():
                postings.setdefault(term, []).append((doc_id, tf))
        self.postings = postings
        self.df = {t: len(p) for t, p in postings.items()}
        self.cf = {t: sum(tf for _, tf in p) for t, p in postings.items()}
        self._norms = {d: math.sqrt(sum(w * w for w in self.doc_weights(d).values())) for d in self.doc_tf}

    def __len__(self):
        return self.N

    def __contains__(self, doc_id):
        return doc_id in self.doc_tf

    def idf(self, term):
        df = self.df.get(term, 0)
        return math.log(self.N / df) if df else 0.0

    def smoothed_idf(self, term):
        df = self.df.get(term, 0)
        return math.log(1 + self.N / df) if df else 0.0

    def weight(self, term, tf):
        if tf <= 0:
            return 0.0
        return (1 + math.log(tf)) * self.idf(term)

    def doc_weights(self, doc_id):
        return {t: self.weight(t, tf) for t, tf in self.doc_tf[doc_id].items()}

    def query_weights(self, tokens):
        return {t: self.weight(t, tf) for t, tf in Counter(tokens).items() if t in self.df}

    def docs_containing(self, terms):
        found = set()
        for term in terms:
            found.update(d for d, _ in self.postings.get(term, ()))
        return found


def build_index(docs):
    """docs: mapping doc_id -> tokens, or an iterable of (doc_id, tokens) pairs."""
    items = docs.items() if hasattr(docs, 'items') else docs
    return InvertedIndex(items)


def _scored(scores):
    return [ScoredDoc(d, s) for d, s in rank_scores(scores) if s > 0]


def _cosine(a, b):
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(w * b.get(t, 0.0) for t, w in a.items())
    return min(1.0, max(0.0, dot / (norm_a * norm_b)))


def cosine_tfidf(query, index):
    if index.N == 0:
        return []
    q = index.query_weights(query)
    q_norm = math.sqrt(sum(w * w for w in q.values()))
    if q_norm == 0:
        return []
    dots = {}
    for term, qw in q.items():
        if qw == 0:
            continue
        for doc_id, tf in index.postings[term]:
            dots[doc_id] = dots.get(doc_id, 0.0) + qw * index.weight(term, tf)
    scores = {d: min(1.0, dot / (q_norm * index._norms[d])) for d, dot in dots.items() if index._norms[d] > 0}
    return _scored(scores)


def _bm25_term(index, term, tf, doc_len, k1, b):
    df = index.df[term]
    idf = math.log(1 + (index.N - df + 0.5) / (df + 0.5))
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * doc_len / index.avg_doc_len))


def _check_bm25_params(k1, b):
    if k1 < 0:
        raise ValueError('k1 must be non-negative')
    if not 0 <= b <= 1:
        raise ValueError('b must lie in [0, 1]')


def bm25(query, index, k1=DEFAULT_K1, b=DEFAULT_B):
    """BM25 over distinct query terms."""
    _check_bm25_params(k1, b)
    if index.avg_doc_len == 0:
        return []
    scores = {}
    for term in set(query):
        for doc_id, tf in index.postings.get(term, ()):
            scores[doc_id] = scores.get(doc_id, 0.0) + _bm25_term(index, term, tf, index.doc_len[doc_id], k1, b)
    return _scored(scores)


def bm25_document(query, doc_tokens, index, k1=DEFAULT_K1, b=DEFAULT_B):
    """BM25 of a token document that is not part of the index, using the index's statistics."""
    _check_bm25_params(k1, b)
    if index.avg_doc_len == 0 or not doc_tokens:
        return 0.0
    tf = Counter(doc_tokens)
    doc_len = len(doc_tokens)
    return sum(_bm25_term(index, t, tf[t], doc_len, k1, b) for t in set(query) if tf.get(t) and t in index.df)


def vsm_similarity(query, doc_tokens, index):
    """Cosine between two token lists weighted (1 + ln tf) * ln(1 + N/df) with the index's statistics."""
    def weights(tokens):
        return {t: (1 + math.log(tf)) * index.smoothed_idf(t) for t, tf in Counter(tokens).items()}
    return _cosine(weights(query), weights(doc_tokens))


def document_cosine(index, doc_a, doc_b):
    return _cosine(index.doc_weights(doc_a), index.doc_weights(doc_b))


def localize(query, code_index, n=10):
    if n < 1:
        raise ValueError('localizer depth must be at least 1')
    return cosine_tfidf(query.tokens, code_index)[:n]
