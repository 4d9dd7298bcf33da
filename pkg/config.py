# config.py
import os


class Config:
    SEED = int(os.environ.get('TRIAGE_LAB_SEED', 7))
    JOBS = int(os.environ.get('TRIAGE_LAB_JOBS', 4))
    LOG_CONFIG = os.environ.get('TRIAGE_LAB_LOG_CONFIG')

    # Issue tracker
    API_URL = os.environ.get('TRIAGE_LAB_API_URL', 'https://api.github.com')
    TOKEN_ENV = 'TRIAGE_LAB_TOKEN'
    PAGE_SIZE = 100

    # Evaluation protocol
    FOLD_COUNT = 10
    TRAIN_FRACTION = 0.70
    SEEDS = [11, 23, 37, 41, 53]
    K_MAX = 5

    # Retrieval
    BM25_K1 = 1.2
    BM25_B = 0.75
    LOCALIZER_DEPTH = 10

    # L2R
    NEGATIVES_PER_QUERY = 10
    RANKER_RATE = 0.01
    RANKER_EPOCHS = 50
    RANKER_L2 = 1e-4
    RANKER_SEED = 0
    RECENT_DAYS = 90

    # Meta features
    CS_PAIR_CAP = 100

    # Classifier grids, enumerated in key order
    CLASSIFIER_GRIDS = {
        'DT': {'max_depth': [3, 5, 8, None], 'min_samples_leaf': [1, 5]},
        'NB': {'var_floor': [1e-9]},
        'LR': {'rate': [0.1, 0.01], 'l2': [0.0, 1e-3], 'epochs': [300]},
        'RF': {'max_depth': [3, 5, 8, None], 'min_samples_leaf': [1, 5], 'n_trees': [50, 100]},
    }
