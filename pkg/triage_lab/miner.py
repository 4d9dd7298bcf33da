# triage_lab/miner.py
"""Issue-tracker REST client that harvests issues and commits into the corpus dataset format."""
import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from urllib.parse import urlencode, urlparse

import requests
from dateutil import parser as date_parser
from requests.structures import CaseInsensitiveDict
from requests.utils import parse_header_links

from triage_lab.models import AuthenticationError, DatasetError, MinerError
from triage_lab.utils import format_timestamp, parse_timestamp, write_jsonl

logger = logging.getLogger(__name__)

TOKEN_ENV = 'TRIAGE_LAB_TOKEN'
MAX_TRIES = 5
BACKOFF_BASE = 1.0
TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})
FIXTURE_INDEX = 'index.json'


@dataclass
class Response:
    status: int
    headers: CaseInsensitiveDict = field(default_factory=CaseInsensitiveDict)
    body: object = None

    @property
    def links(self):
        header = self.headers.get('Link')
        if not header:
            return {}
        return {link['rel']: link['url'] for link in parse_header_links(header) if 'rel' in link}


def endpoint_hash(url):
    return hashlib.sha1(urlparse(url).path.encode('utf-8')).hexdigest()[:12]


class HttpTransport:
    def __init__(self, token=None, session=None, timeout=60):
        self.session = session or requests.Session()
        self.session.headers.update({
            'Accept': 'application/vnd.github+json',
            'X-GitHub-Api-Version': '2022-11-28',
        })
        if token:
            self.session.headers['Authorization'] = f'Bearer {token}'
        self.timeout = timeout

    def get(self, url):
        resp = self.session.get(url, timeout=self.timeout)
        body = resp.json() if resp.content else None
        return Response(resp.status_code, CaseInsensitiveDict(resp.headers), body)


class FixtureTransport:
    """Replays recorded responses; entries sharing a URL are served in order, the last one repeats."""

    def __init__(self, path):
        self.path = str(path)
        index_path = os.path.join(self.path, FIXTURE_INDEX)
        try:
            with open(index_path, encoding='utf-8') as fh:
                entries = json.load(fh)
        except (OSError, ValueError) as exc:
            raise MinerError(f'cannot read fixture index {index_path}: {exc}') from exc
        self._entries = defaultdict(deque)
        for entry in entries:
            self._entries[entry['url']].append(entry)
        self._lock = threading.Lock()
        self.calls = 0
        self.requested = []

    def get(self, url):
        with self._lock:
            self.calls += 1
            self.requested.append(url)
            queue = self._entries.get(url)
            if not queue:
                raise MinerError(f'no recorded response for {url}')
            entry = queue.popleft() if len(queue) > 1 else queue[0]
        body = None
        if entry.get('body'):
            with open(os.path.join(self.path, entry['body']), encoding='utf-8') as fh:
                body = json.load(fh)
        return Response(int(entry.get('status', 200)), CaseInsensitiveDict(entry.get('headers') or {}), body)


class RecordingTransport:
    """Forwards to another transport and writes every exchange in the fixture format."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = str(path)
        self.entries = []
        self._pages = defaultdict(int)
        self._lock = threading.Lock()
        os.makedirs(self.path, exist_ok=True)

    def get(self, url):
        resp = self.inner.get(url)
        with self._lock:
            key = endpoint_hash(url)
            self._pages[key] += 1
            name = None
            if resp.body is not None:
                name = f'{key}-{self._pages[key]}.json'
                with open(os.path.join(self.path, name), 'w', encoding='utf-8') as fh:
                    json.dump(resp.body, fh, indent=2, sort_keys=True)
            headers = {k: v for k, v in resp.headers.items()
                       if k.lower() in ('link', 'x-ratelimit-remaining', 'x-ratelimit-reset', 'retry-after')}
            self.entries.append({'url': url, 'status': resp.status, 'headers': headers, 'body': name})
            with open(os.path.join(self.path, FIXTURE_INDEX), 'w', encoding='utf-8') as fh:
                json.dump(self.entries, fh, indent=2)
        return resp


def make_transport(config):
    if config.mode == 'fixture':
        return FixtureTransport(config.fixture_path)
    return HttpTransport(config.token)


class GitHubMiner:
    def __init__(self, config, transport=None, sleep=time.sleep, clock=time.time,
                 max_tries=MAX_TRIES, backoff_base=BACKOFF_BASE):
        self.config = config
        self.transport = transport or make_transport(config)
        self.sleep = sleep
        self.clock = clock
        self.max_tries = max_tries
        self.backoff_base = backoff_base

    def _url(self, endpoint, **params):
        base = f'{self.config.api_url.rstrip("/")}/repos/{self.config.owner}/{self.config.name}/{endpoint}'
        if self.config.since is not None:
            params['since'] = format_timestamp(self.config.since)
        return f'{base}?{urlencode(params)}' if params else base

    def _retry_after(self, value):
        """Retry-After as seconds, in either its delay-seconds or its HTTP-date form."""
        if value is None:
            return None
        try:
            return max(0.0, float(value))
        except ValueError:
            pass
        try:
            when = date_parser.parse(value)
        except (ValueError, OverflowError):
            logger.warning('Ignoring unparseable Retry-After %r', value)
            return None
        if when.tzinfo is None:
            return None
        return max(0.0, when.timestamp() - self.clock())

    def _rate_limit_wait(self, resp):
        """Seconds to wait when the response is a rate-limit rejection, else None."""
        if resp.status not in (403, 429):
            return None
        wait = self._retry_after(resp.headers.get('Retry-After'))
        if wait is not None:
            return wait
        if resp.headers.get('X-RateLimit-Remaining') == '0' and resp.headers.get('X-RateLimit-Reset'):
            return max(0.0, float(resp.headers['X-RateLimit-Reset']) - self.clock())
        return None

    def get(self, url):
        delay = self.backoff_base
        last_status = None
        for attempt in range(1, self.max_tries + 1):
            try:
                resp = self.transport.get(url)
            except requests.RequestException as exc:
                last_status = None
                logger.warning('GET %s failed (%s), try %d/%d', url, exc, attempt, self.max_tries)
            else:
                if resp.status == 401:
                    raise AuthenticationError(f'authentication failed for {url}', status=401)
                wait = self._rate_limit_wait(resp)
                if wait is not None:
                    logger.warning('Rate limited on %s; waiting %.0fs for the reset', url, wait)
                    self.sleep(wait)
                    last_status = resp.status
                    continue
                if resp.status < 400:
                    return resp
                last_status = resp.status
                if resp.status not in TRANSIENT_STATUSES:
                    raise MinerError(f'GET {url} returned {resp.status}', status=resp.status)
                logger.warning('GET %s returned %d, try %d/%d', url, resp.status, attempt, self.max_tries)
            if attempt < self.max_tries:
                self.sleep(delay)
                delay *= 2
        raise MinerError(f'giving up on {url} after {self.max_tries} tries (last status {last_status})',
                         status=last_status)

    def paginate(self, url):
        while url:
            resp = self.get(url)
            yield from resp.body or []
            url = resp.links.get('next')

    def fetch_issues(self):
        url = self._url('issues', state='all', per_page=self.config.page_size, page=1)
        issues = [issue_record(item) for item in self.paginate(url) if 'pull_request' not in item]
        logger.info('Fetched %d issues from %s', len(issues), self.config.repository)
        return issues

    def fetch_commits(self):
        url = self._url('commits', per_page=self.config.page_size, page=1)
        commits = []
        for item in self.paginate(url):
            detail = self.get(self._detail_url(item['sha'])).body or {}
            commits.append(commit_record(item, detail))
        logger.info('Fetched %d commits from %s', len(commits), self.config.repository)
        return commits

    def _detail_url(self, sha):
        return f'{self.config.api_url.rstrip("/")}/repos/{self.config.owner}/{self.config.name}/commits/{sha}'


def _login_or_signature(account, signature):
    if account and account.get('login'):
        return account['login']
    signature = signature or {}
    return f"{signature.get('name', '')} <{signature.get('email', '')}>"


def _normalized(ts):
    return format_timestamp(parse_timestamp(ts)) if ts else None


def issue_record(item):
    labels = [label['name'] if isinstance(label, dict) else str(label) for label in item.get('labels') or ()]
    assignees = [a['login'] for a in item.get('assignees') or () if a and a.get('login')]
    if not assignees and item.get('assignee'):
        assignees = [item['assignee']['login']]
    return {
        'id': str(item['number']),
        'title': item.get('title') or '',
        'description': item.get('body') or '',
        'created_at': _normalized(item['created_at']),
        'closed_at': _normalized(item.get('closed_at')),
        'labels': sorted(set(labels)),
        'assignees': sorted(set(assignees)),
        'status': 'closed' if item.get('state') == 'closed' else 'open',
    }


def commit_record(item, detail=None):
    detail = detail or {}
    commit = item.get('commit') or {}
    author_sig = commit.get('author') or {}
    committer_sig = commit.get('committer') or author_sig
    files = detail.get('files', item.get('files')) or ()
    return {
        'sha': item['sha'],
        'author': _login_or_signature(item.get('author'), author_sig),
        'committer': _login_or_signature(item.get('committer'), committer_sig),
        'timestamp': _normalized(committer_sig.get('date') or author_sig.get('date')),
        'message': commit.get('message') or '',
        'files': [f['filename'] for f in files],
    }


def fetch_issues(config, transport=None, **kwargs):
    return GitHubMiner(config, transport, **kwargs).fetch_issues()


def fetch_commits(config, transport=None, **kwargs):
    return GitHubMiner(config, transport, **kwargs).fetch_commits()


def export_dataset(issues, commits, output_dir):
    output_dir = str(output_dir)
    paths = {
        'reports': os.path.join(output_dir, 'reports.jsonl'),
        'commits': os.path.join(output_dir, 'commits.jsonl'),
    }
    try:
        write_jsonl(paths['reports'], issues)
        write_jsonl(paths['commits'], commits)
    except OSError as exc:
        raise DatasetError(f'cannot write dataset: {exc.strerror or exc}', path=output_dir) from exc
    logger.info('Exported %d reports and %d commits to %s', len(issues), len(commits), output_dir)
    return paths


def mine(config, transport=None, record_dir=None, **kwargs):
    """Harvest issues and commits concurrently, then export them into config.output_dir."""
    transport = transport or make_transport(config)
    if record_dir:
        transport = RecordingTransport(transport, record_dir)
    miner = GitHubMiner(config, transport, **kwargs)
    with ThreadPoolExecutor(max_workers=2) as pool:
        issues = pool.submit(miner.fetch_issues)
        commits = pool.submit(miner.fetch_commits)
        return export_dataset(issues.result(), commits.result(), config.output_dir)
