# triage_lab/models.py
import hashlib
import json
from dataclasses import dataclass, field, asdict
from datetime import datetime
from enum import Enum
from typing import Mapping, Optional


class TriageLabError(Exception):
    """Root of every error the toolkit raises on purpose."""


class DatasetError(TriageLabError):
    def __init__(self, message, path=None, line=None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ''
        if self.path:
            where = f'{self.path}:{line}: ' if line else f'{self.path}: '
        super().__init__(f'{where}{message}')


class GroundTruthError(DatasetError):
    pass


class DuplicateDocumentError(TriageLabError, ValueError):
    pass


class TemporalLeakError(TriageLabError):
    pass


class TrainingError(TriageLabError, ValueError):
    pass


class ProtocolError(TriageLabError):
    pass


class MinerError(TriageLabError):
    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class AuthenticationError(MinerError):
    pass


class ConfigError(TriageLabError):
    pass


class Approach(str, Enum):
    FREQ = 'FREQ'
    TEXTSIM = 'TEXTSIM'
    L2R = 'L2R'
    LUPIN = 'LUPIN'
    ORACLE = 'ORACLE'


# Class order doubles as the tie rule everywhere a label has to be picked.
CLASS_ORDER = (Approach.FREQ, Approach.TEXTSIM, Approach.L2R)


class ReportStatus(str, Enum):
    OPEN = 'open'
    CLOSED = 'closed'


@dataclass(frozen=True)
class BugReport:
    id: str
    title: str
    description: str
    created_at: datetime
    closed_at: Optional[datetime] = None
    labels: frozenset = frozenset()
    tracker_assignees: frozenset = frozenset()
    status: ReportStatus = ReportStatus.CLOSED

    @property
    def text(self):
        return f'{self.title} {self.description}'

    @property
    def sort_key(self):
        return (self.created_at, self.id)

    @property
    def is_bug(self):
        return any(label.lower() == 'bug' for label in self.labels)


@dataclass(frozen=True)
class Commit:
    sha: str
    author_id: str
    committer_id: str
    timestamp: datetime
    message: str = ''
    changed_files: tuple = ()

    @property
    def developers(self):
        return {self.author_id, self.committer_id}


@dataclass(frozen=True)
class CodeFile:
    path: str
    content_tokens: tuple
    # (developer id, timestamp) pairs, oldest first
    last_modified_by: tuple = ()

    @property
    def first_touched(self):
        return self.last_modified_by[0][1] if self.last_modified_by else None


@dataclass(frozen=True)
class Query:
    report_id: str
    tokens: tuple


@dataclass(frozen=True)
class GroundTruthDevelopers:
    report_id: str
    developers: frozenset


class IdentityMap:
    """Alias -> canonical developer id. Chains resolve transitively; canonical ids map to themselves."""

    def __init__(self, aliases: Optional[Mapping[str, str]] = None):
        self._aliases = {}
        for alias in sorted(aliases or {}):
            self._aliases[alias] = self._resolve(alias, aliases)

    @staticmethod
    def _resolve(alias, aliases):
        seen = set()
        current = alias
        while current in aliases and current not in seen:
            seen.add(current)
            nxt = aliases[current]
            if nxt == current:
                break
            current = nxt
        return current

    def canonical(self, developer_id):
        return self._aliases.get(developer_id, developer_id)

    def canonical_set(self, developer_ids):
        return frozenset(self.canonical(d) for d in developer_ids if d)

    def as_dict(self):
        return dict(self._aliases)

    def __len__(self):
        return len(self._aliases)


@dataclass(frozen=True)
class Corpus:
    reports: tuple
    commits: Mapping
    code_files: Mapping
    identities: IdentityMap
    links: Mapping
    ground_truth: Mapping
    queries: Mapping

    @property
    def experimental(self):
        return tuple(r for r in self.reports if r.id in self.ground_truth)

    def report(self, report_id):
        for r in self.reports:
            if r.id == report_id:
                return r
        raise KeyError(report_id)

    def linked_commits(self, report_id):
        return [self.commits[sha] for sha in sorted(self.links.get(report_id, ()))]

    def fixed_at(self, report_id):
        """Timestamp of the last commit linked to the report; None when nothing is linked."""
        return max((c.timestamp for c in self.linked_commits(report_id)), default=None)

    def __len__(self):
        return len(self.reports)


@dataclass(frozen=True)
class RankedRecommendation:
    report_id: str
    ranked_developers: tuple
    approach: Approach
    dispatched: Optional[Approach] = None

    @property
    def developers(self):
        return [dev for dev, _ in self.ranked_developers]

    def to_dict(self):
        data = {
            'report_id': self.report_id,
            'approach': self.approach.value,
            'developers': [[dev, score] for dev, score in self.ranked_developers],
        }
        if self.dispatched is not None:
            data['dispatched'] = self.dispatched.value
        return data

    @classmethod
    def from_dict(cls, data):
        dispatched = data.get('dispatched')
        return cls(
            report_id=data['report_id'],
            ranked_developers=tuple((dev, float(score)) for dev, score in data['developers']),
            approach=Approach(data['approach']),
            dispatched=Approach(dispatched) if dispatched else None,
        )


@dataclass
class DeveloperProfile:
    developer_id: str
    fixed_report_ids: list = field(default_factory=list)
    touched_files: set = field(default_factory=set)
    fix_timestamps: list = field(default_factory=list)
    commit_count: int = 0
    code_profile_tokens: list = field(default_factory=list)
    report_profile_tokens: list = field(default_factory=list)

    @property
    def fix_count(self):
        return len(self.fixed_report_ids)


L2R_FEATURE_NAMES = (
    'code_vsm', 'code_bm25', 'max_file_vsm', 'max_file_bm25',
    'localizer_overlap', 'localizer_score_sum', 'localizer_score_max', 'localizer_weighted_overlap',
    'report_vsm', 'report_bm25', 'max_report_vsm', 'fix_count',
    'recency', 'recent_fixes', 'commit_count', 'files_touched',
)


@dataclass(frozen=True)
class L2RFeatureVector:
    """f1..f16 of the rank learner, in L2R_FEATURE_NAMES order."""
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(L2R_FEATURE_NAMES):
            raise ValueError(f'expected {len(L2R_FEATURE_NAMES)} features, got {len(self.values)}')

    def __getitem__(self, i):
        return self.values[i]

    def as_dict(self):
        return dict(zip(L2R_FEATURE_NAMES, self.values))


@dataclass(frozen=True)
class LinearRankModel:
    weights: tuple
    rate: float
    epochs: int
    l2: float
    seed: int
    loss_history: tuple = ()


META_FEATURE_NAMES = (
    'avgIDF', 'maxIDF', 'devIDF', 'avgICTF', 'maxICTF', 'devICTF', 'SCS', 'QS',
    'avgVAR', 'maxVAR', 'sumVAR',
    'avgSCQ_reports', 'maxSCQ_reports', 'sumSCQ_reports',
    'avgSCQ_code', 'maxSCQ_code', 'sumSCQ_code',
    'CS',
    'activeDevs', 'avgFixes', 'medianFixes', 'maxFixes', 'fixEntropy',
)


@dataclass(frozen=True)
class MetaFeatureVector:
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(META_FEATURE_NAMES):
            raise ValueError(f'expected {len(META_FEATURE_NAMES)} features, got {len(self.values)}')

    def __getitem__(self, name):
        return self.values[META_FEATURE_NAMES.index(name)]

    def as_dict(self):
        return dict(zip(META_FEATURE_NAMES, self.values))


@dataclass(frozen=True)
class LabeledExample:
    report_id: str
    features: MetaFeatureVector
    label: Approach
    created_at: datetime


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: tuple

    def to_dict(self):
        names = [c.value if isinstance(c, Enum) else str(c) for c in self.classes]
        return {
            'classes': names,
            'precision': list(self.precision),
            'recall': list(self.recall),
            'f1': list(self.f1),
            'support': list(self.support),
            'weighted_precision': self.weighted_precision,
            'weighted_recall': self.weighted_recall,
            'weighted_f1': self.weighted_f1,
            'confusion': [list(row) for row in self.confusion],
        }


@dataclass(frozen=True)
class QueryResult:
    report_id: str
    approach: Approach
    rank: Optional[int]  # None is a MISS
    reciprocal_rank: float
    average_precision: float


@dataclass(frozen=True)
class Metrics:
    mrr: float
    map: float
    hits: tuple  # H@1..H@k
    query_count: int
    mean_rank: Optional[float] = None

    def hit(self, k):
        return self.hits[k - 1]

    def to_dict(self):
        data = {'MRR': self.mrr, 'MAP': self.map}
        for k, value in enumerate(self.hits, start=1):
            data[f'H@{k}'] = value
        data['AR'] = self.mean_rank
        data['queries'] = self.query_count
        return data

    @classmethod
    def from_dict(cls, data):
        hits = []
        k = 1
        while f'H@{k}' in data:
            hits.append(data[f'H@{k}'])
            k += 1
        return cls(mrr=data['MRR'], map=data['MAP'], hits=tuple(hits),
                   query_count=data['queries'], mean_rank=data.get('AR'))


DISTRIBUTION_CELLS = ('L2R', 'TEXTSIM', 'FREQ', 'L2R/TEXTSIM', 'L2R/FREQ', 'TEXTSIM/FREQ', 'ALL')


@dataclass(frozen=True)
class BestApproachLabeling:
    labels: Mapping  # report id -> Approach
    distribution: Mapping  # cell -> count
    excluded: tuple = ()  # all-MISS report ids

    @property
    def total(self):
        return sum(self.distribution.values())

    def class_shares(self):
        total = len(self.labels)
        return {a.value: (sum(1 for v in self.labels.values() if v == a) / total if total else 0.0)
                for a in CLASS_ORDER}


@dataclass(frozen=True)
class ExperimentConfig:
    fold_count: int = 10
    train_fraction: float = 0.70
    seeds: tuple = (11, 23, 37, 41, 53)
    k_max: int = 5
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    localizer_depth: int = 10
    negatives_per_query: int = 10
    ranker_rate: float = 0.01
    ranker_epochs: int = 50
    ranker_l2: float = 1e-4
    ranker_seed: int = 0
    recent_days: int = 90
    cs_pair_cap: int = 100
    classifier_grids: Mapping = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if self.fold_count < 2:
            raise ConfigError('fold_count must be at least 2')
        if not 0 < self.train_fraction < 1:
            raise ConfigError('train_fraction must lie strictly between 0 and 1')
        if not self.seeds:
            raise ConfigError('at least one seed is required')
        if self.k_max < 1:
            raise ConfigError('k_max must be positive')

    @property
    def repetitions(self):
        return len(self.seeds)

    def to_dict(self):
        data = asdict(self)
        data['seeds'] = list(self.seeds)
        return data

    def digest(self):
        data = self.to_dict()
        data.pop('jobs')  # worker count never changes results
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


@dataclass(frozen=True)
class MinerConfig:
    repository: str
    output_dir: str
    token: Optional[str] = None
    since: Optional[datetime] = None
    page_size: int = 100
    mode: str = 'live'  # 'live' | 'fixture'
    fixture_path: Optional[str] = None
    api_url: str = 'https://api.github.com'

    def __post_init__(self):
        if '/' not in self.repository:
            raise ConfigError(f'repository must be owner/name, got {self.repository!r}')
        if not 1 <= self.page_size <= 100:
            raise ConfigError('page_size must be between 1 and 100')
        if self.mode not in ('live', 'fixture'):
            raise ConfigError(f'unknown miner mode {self.mode!r}')
        if self.mode == 'fixture' and not self.fixture_path:
            raise ConfigError('fixture mode needs a fixture path')

    @property
    def owner(self):
        return self.repository.split('/', 1)[0]

    @property
    def name(self):
        return self.repository.split('/', 1)[1]


@dataclass
class ExperimentReport:
    fold_sizes: list
    evaluation_count: int
    train_count: int
    test_count: int
    seeds: list
    evaluation_metrics: dict  # approach -> Metrics over the whole evaluation set
    approach_metrics: dict  # approach -> Metrics over the test split
    oracle_metrics: Metrics
    lupin_metrics: dict  # classifier kind -> mean Metrics over runs
    lupin_runs: dict  # classifier kind -> [Metrics per run]
    classification: dict  # classifier kind -> [ClassificationReport per run]
    hyperparameters: dict  # classifier kind -> [selected grid point per run]
    selected_classifier: str
    distribution: dict
    labeled_count: int
    excluded_count: int
    class_shares: list
    test_predictions: dict = field(default_factory=dict)  # classifier kind -> [{report id: approach} per run]


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    datasets: Mapping  # path -> sha256
    seeds: tuple
    version: str
    duration_seconds: float
