# tests/conftest.py
import json
import os

import pytest

from triage_lab.corpus import load_dataset, load_dataset_dir
from triage_lab.lupin import run_l2r_protocol, run_lupin_experiment
from triage_lab.models import ExperimentConfig
from triage_lab.synthetic import write_dataset
from triage_lab.utils import write_jsonl

SMALL_GRIDS = {
    'DT': {'max_depth': [3, None], 'min_samples_leaf': [1]},
    'NB': {'var_floor': [1e-9]},
    'LR': {'rate': [0.1], 'l2': [0.0], 'epochs': [100]},
    'RF': {'max_depth': [5], 'n_trees': [10]},
}


def small_config(**overrides):
    values = dict(classifier_grids=SMALL_GRIDS, ranker_epochs=10, jobs=1)
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.fixture
def config():
    return small_config()


@pytest.fixture(scope='session')
def mini_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp('mini')
    write_dataset(path, seed=7)
    return path


@pytest.fixture(scope='session')
def mini_corpus(mini_dir):
    return load_dataset_dir(str(mini_dir))


@pytest.fixture(scope='session')
def mini_protocol(mini_corpus):
    return run_l2r_protocol(mini_corpus, small_config())


@pytest.fixture(scope='session')
def mini_experiment(mini_corpus, mini_protocol):
    return run_lupin_experiment(mini_corpus, small_config(), mini_protocol)


@pytest.fixture
def make_report():
    def make(report_id, created_at, title='', description='', closed_at='__auto__', labels=('bug',),
             assignees=(), status='closed'):
        if closed_at == '__auto__':
            closed_at = created_at if status == 'closed' else None
        return {
            'id': report_id, 'title': title, 'description': description, 'created_at': created_at,
            'closed_at': closed_at, 'labels': list(labels), 'assignees': list(assignees), 'status': status,
        }
    return make


@pytest.fixture
def make_commit():
    def make(sha, author, timestamp, message='', files=('a.py',), committer=None):
        return {'sha': sha, 'author': author, 'committer': committer or author, 'timestamp': timestamp,
                'message': message, 'files': list(files)}
    return make


@pytest.fixture
def write_corpus(tmp_path):
    """Write dataset records under tmp_path and load them back as a Corpus."""
    def write(reports, commits=(), code=(), identities=None):
        paths = {
            'reports': write_jsonl(os.path.join(tmp_path, 'reports.jsonl'), reports),
            'commits': write_jsonl(os.path.join(tmp_path, 'commits.jsonl'), commits),
            'code': write_jsonl(os.path.join(tmp_path, 'code.jsonl'), code),
        }
        identity_path = None
        if identities is not None:
            identity_path = os.path.join(tmp_path, 'identities.json')
            with open(identity_path, 'w', encoding='utf-8') as fh:
                json.dump(identities, fh)
        return load_dataset(paths['reports'], paths['commits'], paths['code'], identity_path)
    return write


@pytest.fixture
def config_factory():
    return small_config
