"""Shared fixtures: the FALCON sample corpus and synthetic PU data helpers."""

import csv
import io
import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from buildtriage.ci_events import ParseWarning, detect_qa_bot, extract_build_events
from buildtriage.corpus import load_corpus
from buildtriage.evaluation import PQNSplit
from buildtriage.features import FEATURE_COLUMNS, extract_features
from buildtriage.synth import GeneratorSpec, generate

FIXTURES = Path(__file__).parent / "fixtures"

CORPUS_PATH = FIXTURES / "corpus_fixture.jsonl"
INVALID_CORPUS_PATH = FIXTURES / "corpus_invalid.jsonl"
EXPECTED_FEATURES_PATH = FIXTURES / "expected_features.csv"
FIG1_PATH = FIXTURES / "fig1_issue.jsonl"

FALCON_BOT = "Falcon QA"


@pytest.fixture(scope="session")
def falcon_corpus():
    return load_corpus(CORPUS_PATH, "FALCON")


@pytest.fixture(scope="session")
def falcon_bot(falcon_corpus):
    return detect_qa_bot(falcon_corpus)


@pytest.fixture(scope="session")
def falcon_events(falcon_corpus, falcon_bot):
    # one issue carries a deliberately unclassifiable bot comment
    events = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParseWarning)
        for issue in falcon_corpus.issues:
            events[issue.issue_id] = extract_build_events(issue, falcon_bot)
    return events


@pytest.fixture(scope="session")
def falcon_table(falcon_corpus, falcon_bot):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParseWarning)
        return extract_features(falcon_corpus, falcon_bot)


def pu_sample(seed, n=400, pi=0.5, c_true=0.5, separation=2.5, dim=2,
              labeling_bias=0.0):
    """Draw one labeled/unlabeled Gaussian sample as float arrays."""
    spec = GeneratorSpec(n=n, pi=pi, c_true=c_true, dim=dim,
                         separation=separation, labeling_bias=labeling_bias,
                         seed=seed)
    X, y, s = generate(spec)
    return X, y.astype(bool), s.astype(bool)


def pu_split(seed, n=400, pi=0.5, c_true=0.5, separation=2.5, dim=2):
    """Build a positive/hidden-positive/negative split from one sample."""
    X, y, s = pu_sample(seed, n=n, pi=pi, c_true=c_true,
                        separation=separation, dim=dim)
    keys = [f"row-{i:05d}" for i in range(n)]
    karr = np.array(keys, dtype=object)
    return PQNSplit(
        P=X[s],
        Q=X[~s & y],
        N=X[~y],
        keys_p=tuple(karr[s]),
        keys_q=tuple(karr[~s & y]),
        keys_n=tuple(karr[~y]),
    )


def write_synthetic_feature_csv(path, seed, n=120, pi=0.5, c_true=0.5,
                                separation=2.5):
    """Write a feature CSV whose rows hide a two-feature Gaussian PU sample.

    Returns (keys, manual_dict) where manual_dict maps p/u/q to key lists in
    the shape the CLI's --manual file expects.
    """
    X, y, s = pu_sample(seed, n=n, pi=pi, c_true=c_true, separation=separation)
    header = ["issue_id", "event_index", *FEATURE_COLUMNS, "heuristic_flag"]
    lat_col = FEATURE_COLUMNS.index("ci_latency_hours")
    src_col = FEATURE_COLUMNS.index("source_lines_added")
    rows = []
    keys = []
    for i in range(n):
        issue_id = f"SYN-{i:04d}"
        keys.append([issue_id, 0])
        cells = ["0"] * len(FEATURE_COLUMNS)
        cells[lat_col] = repr(float(X[i, 0]))
        cells[src_col] = repr(float(X[i, 1]))
        rows.append([issue_id, "0", *cells, str(int(s[i]))])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())
    manual = {
        "p": [keys[i] for i in range(n) if s[i]],
        "u": [keys[i] for i in range(n) if not s[i]],
        "q": [keys[i] for i in range(n) if y[i] and not s[i]],
    }
    return keys, manual


def write_manual_json(path, manual):
    Path(path).write_text(json.dumps(manual))
