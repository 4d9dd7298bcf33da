# triage_lab/utils.py
import csv
import hashlib
import json
import os
from datetime import datetime
from io import StringIO

import pytz
from dateutil import parser as date_parser

# Scores closer than this are treated as ties so float noise cannot reorder equal items.
SCORE_DECIMALS = 12


def parse_timestamp(value):
    """Parse an RFC 3339 string into an aware UTC datetime with seconds precision."""
    if isinstance(value, datetime):
        ts = value
    else:
        if not isinstance(value, str) or 'T' not in value.upper():
            raise ValueError(f'not an RFC 3339 timestamp: {value!r}')
        ts = date_parser.isoparse(value)
    if ts.tzinfo is None:
        raise ValueError(f'timestamp without UTC offset: {value!r}')
    return ts.astimezone(pytz.utc).replace(microsecond=0)


def format_timestamp(ts):
    if ts is None:
        return None
    return ts.astimezone(pytz.utc).strftime('%Y-%m-%dT%H:%M:%SZ')


def rank_scores(scores):
    """(key, score) pairs sorted by score descending, ties by key ascending."""
    items = scores.items() if isinstance(scores, dict) else scores
    return sorted(items, key=lambda kv: (-round(kv[1], SCORE_DECIMALS), kv[0]))


def chronological_folds(items, fold_count):
    """Split an ordered sequence into fold_count contiguous folds; the remainder goes to the earliest folds."""
    items = list(items)
    base, extra = divmod(len(items), fold_count)
    folds, start = [], 0
    for i in range(fold_count):
        size = base + (1 if i < extra else 0)
        folds.append(items[start:start + size])
        start += size
    return folds


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def dumps_json(data):
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + '\n'


def write_json(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(dumps_json(data))
    return path


def read_json(path):
    with open(path, encoding='utf-8') as fh:
        return json.load(fh)


def export_rows_to_csv(header, rows, decimals=6):
    """Render rows as CSV text; floats are written with a fixed number of decimals."""
    output = StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([f'{v:.{decimals}f}' if isinstance(v, float) else v for v in row])
    return output.getvalue()


def write_jsonl(path, records):
    """One compact, key-sorted JSON object per line, in the given order."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(',', ':')) + '\n')
    return path
