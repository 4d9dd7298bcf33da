# triage_lab/corpus.py
"""Dataset ingestion: JSON-lines loading, text preprocessing, commit linking and ground truth."""
import bisect
import json
import logging
import os
import re
from collections import defaultdict
from functools import lru_cache

from nltk.stem import PorterStemmer

from triage_lab.models import (
    BugReport, CodeFile, Commit, Corpus, DatasetError, GroundTruthDevelopers,
    GroundTruthError, IdentityMap, Query, ReportStatus,
)
from triage_lab.utils import parse_timestamp

logger = logging.getLogger(__name__)

STOPWORDS_PATH = os.path.join(os.path.dirname(__file__), 'data', 'stopwords.txt')

_TOKEN_RE = re.compile(r'[^\W_]+')
_HEX_RE = re.compile(r'\b[0-9a-fA-F]{7,40}\b')
_SHA_RE = re.compile(r'^[0-9a-fA-F]{7,40}$')
_CLOSING_RE = re.compile(r'(?:fix(?:es|ed)?|close(?:s|d)?|resolve(?:s|d)?)\s*:?\s*#(\S*)', re.IGNORECASE)

_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


def _load_stopwords(path=STOPWORDS_PATH):
    with open(path, encoding='utf-8') as fh:
        return frozenset(line.strip() for line in fh if line.strip() and not line.startswith('#'))


STOPWORDS = _load_stopwords()


@lru_cache(maxsize=65536)
def _stem(token):
    return _stemmer.stem(token)


def preprocess(text):
    """Lower-case, split on non-alphanumerics, drop stop words, Porter-stem. Order is preserved."""
    if not text:
        return []
    return [_stem(tok) for tok in _TOKEN_RE.findall(text.lower()) if tok not in STOPWORDS]


def _read_jsonl(path):
    try:
        fh = open(path, encoding='utf-8')
    except OSError as e:
        raise DatasetError(f'cannot open file: {e.strerror}', path) from e
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f'malformed JSON ({e.msg})', path, line_no) from e
            if not isinstance(record, dict):
                raise DatasetError('expected a JSON object', path, line_no)
            yield line_no, record


def _field(record, name, path, line_no):
    try:
        return record[name]
    except KeyError:
        raise DatasetError(f'missing field {name!r}', path, line_no) from None


def _timestamp(value, path, line_no):
    try:
        return parse_timestamp(value)
    except (ValueError, OverflowError) as e:
        raise DatasetError(f'unknown timestamp format: {value!r}', path, line_no) from e


def load_identities(path):
    try:
        with open(path, encoding='utf-8') as fh:
            aliases = json.load(fh)
    except OSError as e:
        raise DatasetError(f'cannot open file: {e.strerror}', path) from e
    except json.JSONDecodeError as e:
        raise DatasetError(f'malformed JSON ({e.msg})', path, e.lineno) from e
    if not isinstance(aliases, dict) or not all(isinstance(v, str) for v in aliases.values()):
        raise DatasetError('identity map must be an object of alias -> canonical id', path)
    return IdentityMap(aliases)


def load_reports(path, identities):
    reports, seen = [], set()
    for line_no, rec in _read_jsonl(path):
        report_id = str(_field(rec, 'id', path, line_no))
        if report_id in seen:
            raise DatasetError(f'duplicate report id {report_id!r}', path, line_no)
        seen.add(report_id)
        created_at = _timestamp(_field(rec, 'created_at', path, line_no), path, line_no)
        closed_raw = rec.get('closed_at')
        closed_at = _timestamp(closed_raw, path, line_no) if closed_raw else None
        if closed_at is not None and closed_at < created_at:
            raise DatasetError(f'report {report_id!r} closed before it was created', path, line_no)
        try:
            status = ReportStatus(rec.get('status', 'closed'))
        except ValueError:
            raise DatasetError(f'unknown status {rec.get("status")!r}', path, line_no) from None
        reports.append(BugReport(
            id=report_id,
            title=rec.get('title') or '',
            description=rec.get('description') or '',
            created_at=created_at,
            closed_at=closed_at,
            labels=frozenset(rec.get('labels') or ()),
            tracker_assignees=identities.canonical_set(rec.get('assignees') or ()),
            status=status,
        ))
    reports.sort(key=lambda r: r.sort_key)
    return reports


def load_commits(path, identities):
    commits = {}
    for line_no, rec in _read_jsonl(path):
        sha = str(_field(rec, 'sha', path, line_no)).lower()
        if not _SHA_RE.match(sha):
            raise DatasetError(f'invalid commit sha {sha!r}', path, line_no)
        if sha in commits:
            raise DatasetError(f'duplicate commit sha {sha!r}', path, line_no)
        commits[sha] = Commit(
            sha=sha,
            author_id=identities.canonical(_field(rec, 'author', path, line_no)),
            committer_id=identities.canonical(rec.get('committer') or rec['author']),
            timestamp=_timestamp(_field(rec, 'timestamp', path, line_no), path, line_no),
            message=rec.get('message') or '',
            changed_files=tuple(rec.get('files') or ()),
        )
    return commits


def load_code(path, commits):
    touches = defaultdict(set)
    for commit in commits.values():
        for file_path in commit.changed_files:
            touches[file_path].add((commit.author_id, commit.timestamp))
    code_files = {}
    for line_no, rec in _read_jsonl(path):
        file_path = _field(rec, 'path', path, line_no)
        if file_path in code_files:
            raise DatasetError(f'duplicate code path {file_path!r}', path, line_no)
        code_files[file_path] = CodeFile(
            path=file_path,
            content_tokens=tuple(preprocess(rec.get('content') or '')),
            last_modified_by=tuple(sorted(touches.get(file_path, ()), key=lambda t: (t[1], t[0]))),
        )
    return code_files


def _is_word_char(ch):
    return ch.isalnum() or ch == '_'


def _referenced_ids(tail, report_ids):
    """Report ids that `#<id>\\b` would match at the start of tail."""
    found = set()
    for end in range(1, len(tail) + 1):
        candidate = tail[:end]
        if candidate not in report_ids:
            continue
        last = candidate[-1]
        nxt = tail[end] if end < len(tail) else ''
        boundary = (_is_word_char(last) != _is_word_char(nxt)) if nxt else _is_word_char(last)
        if boundary:
            found.add(candidate)
    return found


def link_commits(reports, commits):
    """Map report id -> set of commit shas, by closing keywords in messages or sha prefixes in report text."""
    reports = list(reports)
    commits = list(commits)
    report_ids = {r.id for r in reports}
    links = defaultdict(set)

    for commit in commits:
        for match in _CLOSING_RE.finditer(commit.message):
            for report_id in _referenced_ids(match.group(1), report_ids):
                links[report_id].add(commit.sha)

    shas = sorted(c.sha for c in commits)
    for report in reports:
        for token in _HEX_RE.findall(report.text):
            token = token.lower()
            i = bisect.bisect_left(shas, token)
            while i < len(shas) and shas[i].startswith(token):
                links[report.id].add(shas[i])
                i += 1
    return dict(links)


def build_ground_truth(report, linked_commits, identity_map):
    developers = set(report.tracker_assignees)
    for commit in linked_commits:
        developers.add(commit.author_id)
        developers.add(commit.committer_id)
    developers = identity_map.canonical_set(developers)
    if not developers:
        raise GroundTruthError(f'report {report.id!r} has no fixing developers')
    return GroundTruthDevelopers(report_id=report.id, developers=developers)


def load_dataset(reports_path, commits_path, code_path, identity_path=None):
    identities = load_identities(identity_path) if identity_path else IdentityMap()
    reports = load_reports(reports_path, identities)
    commits = load_commits(commits_path, identities)
    code_files = load_code(code_path, commits)
    links = link_commits(reports, commits.values())

    ground_truth = {}
    for report in reports:
        shas = links.get(report.id)
        if report.status is not ReportStatus.CLOSED or not report.is_bug or not shas:
            continue
        ground_truth[report.id] = build_ground_truth(
            report, [commits[sha] for sha in sorted(shas)], identities)

    queries = {r.id: Query(report_id=r.id, tokens=tuple(preprocess(r.text))) for r in reports}
    corpus = Corpus(
        reports=tuple(reports),
        commits=commits,
        code_files=code_files,
        identities=identities,
        links={k: frozenset(v) for k, v in links.items()},
        ground_truth=ground_truth,
        queries=queries,
    )
    logger.info('Loaded %d reports (%d experimental), %d commits, %d code files',
                len(reports), len(ground_truth), len(commits), len(code_files))
    return corpus


def dataset_paths(data_dir):
    identities = os.path.join(data_dir, 'identities.json')
    return {
        'reports': os.path.join(data_dir, 'reports.jsonl'),
        'commits': os.path.join(data_dir, 'commits.jsonl'),
        'code': os.path.join(data_dir, 'code.jsonl'),
        'identities': identities if os.path.exists(identities) else None,
    }


def load_dataset_dir(data_dir):
    paths = dataset_paths(data_dir)
    return load_dataset(paths['reports'], paths['commits'], paths['code'], paths['identities'])


def dataset_stats(corpus):
    experimental = corpus.experimental
    developers = set()
    for commit in corpus.commits.values():
        developers |= commit.developers
    for report in corpus.reports:
        developers |= report.tracker_assignees
    gt_sizes = [len(corpus.ground_truth[r.id].developers) for r in experimental]
    return {
        'reports': len(corpus.reports),
        'experimental_reports': len(experimental),
        'linked_reports': len(corpus.links),
        'commits': len(corpus.commits),
        'code_files': len(corpus.code_files),
        'developers': len(developers),
        'mean_ground_truth_size': sum(gt_sizes) / len(gt_sizes) if gt_sizes else 0.0,
        'empty_queries': sum(1 for r in experimental if not corpus.queries[r.id].tokens),
    }
