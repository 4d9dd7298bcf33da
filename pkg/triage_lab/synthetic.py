# triage_lab/synthetic.py
"""Deterministic mini dataset: component-owning developers, their code files, and the bugs they fix."""
import hashlib
import logging
import os
from datetime import datetime, timedelta

import numpy as np
import pytz

from triage_lab.utils import format_timestamp, write_json, write_jsonl

logger = logging.getLogger(__name__)

# developer -> (component, vocabulary)
COMPONENTS = {
    'alice': ('render', ['chart', 'axis', 'legend', 'canvas', 'pixel', 'color', 'gradient', 'shadow']),
    'bob': ('network', ['socket', 'timeout', 'proxy', 'retry', 'header', 'upload', 'download', 'latency']),
    'carol': ('storage', ['database', 'query', 'index', 'transaction', 'cache', 'disk', 'migration', 'schema']),
    'dave': ('auth', ['login', 'password', 'session', 'permission', 'account', 'logout', 'credential', 'role']),
    'erin': ('parser', ['syntax', 'grammar', 'parse', 'literal', 'expression', 'comment', 'bracket', 'escape']),
    'frank': ('build', ['compiler', 'bundle', 'module', 'dependency', 'package', 'plugin', 'version', 'install']),
    'grace': ('widgets', ['button', 'dialog', 'modal', 'keyboard', 'focus', 'scroll', 'tooltip', 'menu']),
    'heidi': ('locale', ['translation', 'unicode', 'timezone', 'currency', 'calendar', 'plural', 'language', 'date']),
}
POPULARITY = (0.22, 0.18, 0.15, 0.12, 0.11, 0.09, 0.07, 0.06)
FILES_PER_DEVELOPER = (4, 4, 4, 4, 4, 4, 3, 3)
NOISE = ['error', 'broken', 'wrong', 'unexpected', 'behaviour', 'page', 'user', 'steps', 'reproduce', 'window',
         'screen', 'after', 'update', 'sometimes', 'always', 'fails']
ALIASES = {'Bob Builder <bob@example.com>': 'bob', 'bobby': 'Bob Builder <bob@example.com>'}
EPOCH = datetime(2021, 1, 4, 9, 0, 0, tzinfo=pytz.utc)


def _sha(seed, key):
    return hashlib.sha1(f'{seed}:{key}'.encode('utf-8')).hexdigest()


def _words(rng, vocabulary, count):
    return [vocabulary[int(i)] for i in rng.integers(len(vocabulary), size=count)]


def generate_dataset(seed=7, bug_count=120, extra_count=10):
    """Return reports, commits, code records and the identity map of a small project history."""
    rng = np.random.default_rng(seed)
    developers = list(COMPONENTS)

    code, files = [], {}
    for dev, n_files in zip(developers, FILES_PER_DEVELOPER):
        component, vocabulary = COMPONENTS[dev]
        files[dev] = []
        for j in range(n_files):
            path = f'src/{component}/{vocabulary[j]}_{component}.py'
            files[dev].append(path)
            words = _words(rng, vocabulary, 14) + _words(rng, NOISE, 3)
            code.append({'path': path, 'content': f'module {component} ' + ' '.join(words)})

    commits = []
    for k, dev in enumerate(developers):
        ts = EPOCH - timedelta(days=30 - k)
        commits.append({
            'sha': _sha(seed, f'import-{dev}'), 'author': dev, 'committer': dev,
            'timestamp': format_timestamp(ts), 'message': f'Import {COMPONENTS[dev][0]} module',
            'files': list(files[dev]),
        })

    total = bug_count + extra_count
    extra_slots = sorted(set(int(i) for i in np.linspace(6, total - 4, extra_count).round()))
    reports, texts = [], {dev: [] for dev in developers}
    for i in range(total):
        report_id = str(i + 1)
        created = EPOCH + timedelta(days=i, hours=int(rng.integers(0, 8)))
        owner = developers[int(rng.choice(len(developers), p=POPULARITY))]
        component, vocabulary = COMPONENTS[owner]

        if texts[owner] and rng.random() < 0.15:
            title, description = texts[owner][int(rng.integers(len(texts[owner])))]
        else:
            title = ' '.join(_words(rng, vocabulary, 3) + ['fails'])
            words = _words(rng, vocabulary, 6) + _words(rng, NOISE, 4)
            if rng.random() < 0.25:
                other = developers[int(rng.integers(len(developers)))]
                words += _words(rng, COMPONENTS[other][1], 2)
            description = ' '.join(words)
            texts[owner].append((title, description))

        # the owner does not always fix their own component
        fixer = owner if rng.random() >= 0.15 else developers[int(rng.integers(len(developers)))]
        if i in extra_slots:
            kind = 'open' if extra_slots.index(i) % 2 == 0 else 'enhancement'
        else:
            kind = 'bug'
        assignee = 'bobby' if fixer == 'bob' and i % 3 == 0 else fixer

        record = {
            'id': report_id,
            'title': title,
            'description': description,
            'created_at': format_timestamp(created),
            'closed_at': None if kind == 'open' else format_timestamp(created + timedelta(days=2)),
            'labels': ['enhancement'] if kind == 'enhancement' else ['bug', component],
            'assignees': [assignee],
            'status': 'open' if kind == 'open' else 'closed',
        }
        reports.append(record)
        if kind == 'open':
            continue

        author = 'Bob Builder <bob@example.com>' if fixer == 'bob' and i % 2 == 0 else fixer
        n_touched = 1 + int(rng.integers(0, 2))
        touched = sorted({files[fixer][int(j)] for j in rng.integers(len(files[fixer]), size=n_touched)})
        commits.append({
            'sha': _sha(seed, report_id),
            'author': author,
            'committer': author,
            'timestamp': format_timestamp(created + timedelta(days=1, minutes=30)),
            'message': f'Fixes #{report_id}: {title}',
            'files': touched,
        })

    return {'reports': reports, 'commits': commits, 'code': code, 'identities': dict(ALIASES)}


def write_dataset(out_dir, seed=7, bug_count=120, extra_count=10):
    data = generate_dataset(seed, bug_count, extra_count)
    out_dir = str(out_dir)
    paths = {
        'reports': write_jsonl(os.path.join(out_dir, 'reports.jsonl'), data['reports']),
        'commits': write_jsonl(os.path.join(out_dir, 'commits.jsonl'), data['commits']),
        'code': write_jsonl(os.path.join(out_dir, 'code.jsonl'), data['code']),
        'identities': write_json(os.path.join(out_dir, 'identities.json'), data['identities']),
    }
    logger.info('Wrote %d reports and %d commits to %s', len(data['reports']), len(data['commits']), out_dir)
    return paths
