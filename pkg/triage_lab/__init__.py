# triage_lab/__init__.py
import configparser
import json
import logging
import logging.config
import os

from config import Config
from triage_lab.models import ConfigError, ExperimentConfig

__version__ = '0.3.0'

LOGGING_INI = os.path.join(os.path.dirname(__file__), 'logging.ini')
CONFIG_SECTION = 'triage-lab'

# ExperimentConfig field -> Config attribute
_CONFIG_KEYS = {
    'fold_count': 'FOLD_COUNT',
    'train_fraction': 'TRAIN_FRACTION',
    'seeds': 'SEEDS',
    'k_max': 'K_MAX',
    'bm25_k1': 'BM25_K1',
    'bm25_b': 'BM25_B',
    'localizer_depth': 'LOCALIZER_DEPTH',
    'negatives_per_query': 'NEGATIVES_PER_QUERY',
    'ranker_rate': 'RANKER_RATE',
    'ranker_epochs': 'RANKER_EPOCHS',
    'ranker_l2': 'RANKER_L2',
    'ranker_seed': 'RANKER_SEED',
    'recent_days': 'RECENT_DAYS',
    'cs_pair_cap': 'CS_PAIR_CAP',
    'classifier_grids': 'CLASSIFIER_GRIDS',
    'jobs': 'JOBS',
}


def configure_logging(path=None, level=None):
    path = path or Config.LOG_CONFIG or LOGGING_INI
    if os.path.exists(path):
        logging.config.fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format='%(levelname)-5.5s [%(name)s] %(message)s')
    if level is not None:
        logging.getLogger('triage_lab').setLevel(level)


def _parse_value(raw):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def read_config_file(path):
    """Read the `[triage-lab]` section of a static config file into field -> value."""
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding='utf-8'):
        raise ConfigError(f'cannot read config file {path}')
    if not parser.has_section(CONFIG_SECTION):
        raise ConfigError(f'{path}: missing [{CONFIG_SECTION}] section')
    values = {}
    for key, raw in parser.items(CONFIG_SECTION):
        if key not in _CONFIG_KEYS:
            raise ConfigError(f'{path}: unknown key {key!r}')
        values[key] = _parse_value(raw)
    return values


def create_config(config_class=Config, path=None, **overrides):
    values = {key: getattr(config_class, attr) for key, attr in _CONFIG_KEYS.items()}
    if path:
        values.update(read_config_file(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f'unknown config keys: {", ".join(sorted(unknown))}')
    values['seeds'] = tuple(int(s) for s in values['seeds'])
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
