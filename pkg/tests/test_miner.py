# tests/test_miner.py
import json
import os

import pytest
import requests

from triage_lab.corpus import load_dataset
from triage_lab.miner import (
    FixtureTransport, GitHubMiner, RecordingTransport, commit_record, export_dataset, fetch_commits,
    fetch_issues, mine,
)
from triage_lab.models import AuthenticationError, DatasetError, MinerConfig, MinerError, ReportStatus
from triage_lab.utils import parse_timestamp

API = 'https://api.github.com/repos/acme/widget'
ISSUES = f'{API}/issues?state=all&per_page=100&page=1'
COMMITS = f'{API}/commits?per_page=100&page=1'


def _issue(number, state='closed', labels=('bug',), **extra):
    item = {
        'number': number, 'title': f'Issue {number}', 'body': f'Body of {number}', 'state': state,
        'created_at': '2021-03-01T10:00:00Z',
        'closed_at': '2021-03-02T10:00:00Z' if state == 'closed' else None,
        'labels': [{'name': name} for name in labels],
        'assignees': [{'login': 'carol'}],
    }
    item.update(extra)
    return item


def _commit(sha, login='alice', message='Fixes #1'):
    signature = {'name': 'Alice A', 'email': 'alice@example.com', 'date': '2021-03-01T12:00:00Z'}
    return {
        'sha': sha,
        'commit': {'author': signature, 'committer': signature, 'message': message},
        'author': {'login': login} if login else None,
        'committer': {'login': login} if login else None,
    }


def _write_fixture(path, exchanges):
    """exchanges: (url, status, headers, body) tuples in request order."""
    os.makedirs(path, exist_ok=True)
    entries = []
    for i, (url, status, headers, body) in enumerate(exchanges):
        name = None
        if body is not None:
            name = f'body-{i}.json'
            with open(os.path.join(path, name), 'w', encoding='utf-8') as fh:
                json.dump(body, fh)
        entries.append({'url': url, 'status': status, 'headers': headers, 'body': name})
    with open(os.path.join(path, 'index.json'), 'w', encoding='utf-8') as fh:
        json.dump(entries, fh)
    return str(path)


def _config(tmp_path, fixture_path=None, **kwargs):
    return MinerConfig(
        repository='acme/widget', output_dir=str(tmp_path / 'out'),
        mode='fixture' if fixture_path else 'live', fixture_path=fixture_path, **kwargs,
    )


def _miner(tmp_path, exchanges, sleeps=None, **kwargs):
    fixture = _write_fixture(tmp_path / 'fixture', exchanges)
    transport = FixtureTransport(fixture)
    record = sleeps if sleeps is not None else []
    miner = GitHubMiner(_config(tmp_path, fixture), transport, sleep=record.append, clock=lambda: 1000.0, **kwargs)
    return miner, transport


def _next(page):
    return {'Link': f'<{API}/issues?state=all&per_page=100&page={page}>; rel="next"'}


def test_no_issues(tmp_path):
    miner, transport = _miner(tmp_path, [(ISSUES, 200, {}, [])])
    assert miner.fetch_issues() == []
    assert transport.calls == 1


def test_issue_pages_follow_next_links(tmp_path):
    miner, transport = _miner(tmp_path, [
        (ISSUES, 200, _next(2), [_issue(n) for n in range(1, 101)]),
        (f'{API}/issues?state=all&per_page=100&page=2', 200, _next(3), [_issue(n) for n in range(101, 201)]),
        (f'{API}/issues?state=all&per_page=100&page=3', 200, {}, [_issue(201)]),
    ])
    issues = miner.fetch_issues()
    assert len(issues) == 201
    assert transport.calls == 3
    assert issues[-1]['id'] == '201'


def test_pull_requests_are_skipped(tmp_path):
    miner, _ = _miner(tmp_path, [(ISSUES, 200, {}, [_issue(1), _issue(2, pull_request={'url': 'x'})])])
    assert [i['id'] for i in miner.fetch_issues()] == ['1']


def test_issue_record_fields(tmp_path):
    miner, _ = _miner(tmp_path, [(ISSUES, 200, {}, [_issue(7, state='open', labels=('ui', 'bug'))])])
    (record,) = miner.fetch_issues()
    assert record == {
        'id': '7', 'title': 'Issue 7', 'description': 'Body of 7', 'created_at': '2021-03-01T10:00:00Z',
        'closed_at': None, 'labels': ['bug', 'ui'], 'assignees': ['carol'], 'status': 'open',
    }


def test_rate_limit_waits_for_reset(tmp_path):
    sleeps = []
    miner, transport = _miner(tmp_path, [
        (ISSUES, 403, {'X-RateLimit-Remaining': '0', 'X-RateLimit-Reset': '1060'}, {'message': 'rate limited'}),
        (ISSUES, 200, {}, [_issue(1)]),
    ], sleeps=sleeps)
    assert len(miner.fetch_issues()) == 1
    assert sleeps == [60.0]
    assert transport.calls == 2


def test_retry_after_header_is_honoured(tmp_path):
    sleeps = []
    miner, _ = _miner(tmp_path, [(ISSUES, 429, {'Retry-After': '7'}, None), (ISSUES, 200, {}, [])], sleeps=sleeps)
    assert miner.fetch_issues() == []
    assert sleeps == [7.0]


@pytest.mark.parametrize('value, expected', [
    ('Thu, 01 Jan 1970 00:17:25 GMT', [45.0]),
    ('Thu, 01 Jan 1970 00:00:05 GMT', [0.0]),
    ('soon', [1.0]),
])
def test_retry_after_http_date(tmp_path, value, expected):
    sleeps = []
    miner, _ = _miner(tmp_path, [(ISSUES, 429, {'Retry-After': value}, None), (ISSUES, 200, {}, [])], sleeps=sleeps)
    assert miner.fetch_issues() == []
    assert sleeps == expected


def test_transient_errors_back_off_exponentially(tmp_path):
    sleeps = []
    miner, _ = _miner(tmp_path, [
        (ISSUES, 503, {}, None), (ISSUES, 502, {}, None), (ISSUES, 200, {}, [_issue(1)]),
    ], sleeps=sleeps)
    assert len(miner.fetch_issues()) == 1
    assert sleeps == [1.0, 2.0]


def test_exhausted_retries_report_last_status(tmp_path):
    sleeps = []
    miner, transport = _miner(tmp_path, [(ISSUES, 503, {}, None)], sleeps=sleeps)
    with pytest.raises(MinerError) as excinfo:
        miner.fetch_issues()
    assert excinfo.value.status == 503
    assert sleeps == [1.0, 2.0, 4.0, 8.0]
    assert transport.calls == 5


def test_authentication_failure_is_terminal(tmp_path):
    sleeps = []
    miner, transport = _miner(tmp_path, [(ISSUES, 401, {}, {'message': 'Bad credentials'})], sleeps=sleeps)
    with pytest.raises(AuthenticationError):
        miner.fetch_issues()
    assert transport.calls == 1
    assert sleeps == []


def test_client_error_is_not_retried(tmp_path):
    miner, transport = _miner(tmp_path, [(ISSUES, 404, {}, {'message': 'Not Found'})])
    with pytest.raises(MinerError) as excinfo:
        miner.fetch_issues()
    assert excinfo.value.status == 404
    assert transport.calls == 1


def test_unrecorded_url_is_an_error(tmp_path):
    miner, _ = _miner(tmp_path, [(COMMITS, 200, {}, [])])
    with pytest.raises(MinerError):
        miner.fetch_issues()


def test_commit_files_come_from_detail(tmp_path):
    sha = 'a1b2c3d4e5f60718293a4b5c6d7e8f9012345678'
    miner, _ = _miner(tmp_path, [
        (COMMITS, 200, {}, [_commit(sha)]),
        (f'{API}/commits/{sha}', 200, {}, {'files': [{'filename': 'src/a.py'}, {'filename': 'src/b.py'}]}),
    ])
    (record,) = miner.fetch_commits()
    assert record['files'] == ['src/a.py', 'src/b.py']
    assert (record['author'], record['timestamp'], record['message']) == ('alice', '2021-03-01T12:00:00Z', 'Fixes #1')


def test_commit_without_account_uses_signature():
    record = commit_record(_commit('abc1234', login=None), {'files': []})
    assert record['author'] == 'Alice A <alice@example.com>'
    assert record['committer'] == 'Alice A <alice@example.com>'


def test_empty_repository(tmp_path):
    fixture = _write_fixture(tmp_path / 'fixture', [(COMMITS, 200, {}, [])])
    assert fetch_commits(_config(tmp_path, fixture)) == []


def test_fixture_mode_never_touches_the_network(tmp_path, monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError('network access in fixture mode')

    monkeypatch.setattr(requests.Session, 'get', refuse)
    monkeypatch.setattr(requests.Session, 'request', refuse)
    fixture = _write_fixture(tmp_path / 'fixture', [(ISSUES, 200, {}, [_issue(1)])])
    assert len(fetch_issues(_config(tmp_path, fixture))) == 1


def test_export_writes_one_line_per_record(tmp_path):
    issues = [{'id': '1', 'title': 'a'}, {'id': '2', 'title': 'b'}]
    paths = export_dataset(issues, [], tmp_path / 'out')
    with open(paths['reports'], encoding='utf-8') as fh:
        assert len(fh.readlines()) == 2
    with open(paths['commits'], encoding='utf-8') as fh:
        assert fh.read() == ''


def test_export_is_byte_identical_on_rerun(tmp_path):
    issues = [{'id': '1', 'title': 'ünïcode', 'labels': ['bug']}]
    first = export_dataset(issues, [], tmp_path / 'a')
    second = export_dataset(issues, [], tmp_path / 'b')
    with open(first['reports'], 'rb') as a, open(second['reports'], 'rb') as b:
        assert a.read() == b.read()


def test_export_into_unwritable_location(tmp_path):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory', encoding='utf-8')
    with pytest.raises(DatasetError):
        export_dataset([], [], blocker / 'out')


def test_exported_dataset_loads_back(tmp_path):
    issues = [
        {'id': '1', 'title': 'Crash on save', 'description': 'Saving crashes', 'created_at': '2021-03-01T10:00:00Z',
         'closed_at': '2021-03-02T10:00:00Z', 'labels': ['bug'], 'assignees': ['carol'], 'status': 'closed'},
        {'id': '2', 'title': 'Dark mode', 'description': '', 'created_at': '2021-03-03T10:00:00Z',
         'closed_at': None, 'labels': ['enhancement'], 'assignees': [], 'status': 'open'},
    ]
    commits = [{'sha': 'abc1234def', 'author': 'alice', 'committer': 'bob', 'timestamp': '2021-03-01T12:00:00Z',
                'message': 'Fixes #1', 'files': ['src/save.py']}]
    paths = export_dataset(issues, commits, tmp_path)
    code = tmp_path / 'code.jsonl'
    code.write_text('', encoding='utf-8')
    corpus = load_dataset(paths['reports'], paths['commits'], str(code))

    first, second = corpus.reports
    assert (first.id, first.title, first.description) == ('1', 'Crash on save', 'Saving crashes')
    assert first.closed_at == parse_timestamp('2021-03-02T10:00:00Z')
    assert first.labels == {'bug'} and first.tracker_assignees == {'carol'}
    assert second.status is ReportStatus.OPEN and second.closed_at is None
    commit = corpus.commits['abc1234def']
    assert (commit.author_id, commit.committer_id, commit.changed_files) == ('alice', 'bob', ('src/save.py',))
    assert corpus.ground_truth['1'].developers == {'alice', 'bob', 'carol'}


def test_recorded_exchanges_replay_identically(tmp_path):
    source = _write_fixture(tmp_path / 'source', [
        (ISSUES, 200, _next(2), [_issue(1)]),
        (f'{API}/issues?state=all&per_page=100&page=2', 200, {}, [_issue(2)]),
    ])
    recorded = tmp_path / 'recorded'
    live = fetch_issues(_config(tmp_path, source), RecordingTransport(FixtureTransport(source), recorded))
    replayed = fetch_issues(_config(tmp_path, str(recorded)))
    assert replayed == live
    assert len(os.listdir(recorded)) == 3


def test_mine_exports_issues_and_commits(tmp_path):
    sha = 'abc1234def'
    fixture = _write_fixture(tmp_path / 'fixture', [
        (ISSUES, 200, {}, [_issue(1), _issue(2, labels=('docs',))]),
        (COMMITS, 200, {}, [_commit(sha)]),
        (f'{API}/commits/{sha}', 200, {}, {'files': [{'filename': 'src/a.py'}]}),
    ])
    paths = mine(_config(tmp_path, fixture))
    with open(paths['reports'], encoding='utf-8') as fh:
        assert [json.loads(line)['id'] for line in fh] == ['1', '2']
    with open(paths['commits'], encoding='utf-8') as fh:
        assert json.loads(fh.readline())['files'] == ['src/a.py']
