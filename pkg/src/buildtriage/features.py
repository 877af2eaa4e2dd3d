"""The 33 features of a build failure.

Features split into three groups: the issue report the failure lives in
(priority, links, parallel work), the comment history before the failure
(prior comments, recurring error messages), and the push that triggered the
build (patch latency and per-suffix line counts).

Column order is fixed: FEATURE_COLUMNS lists the 33 names used by the CSV
interchange format, and MATRIX_COLUMNS appends one indicator column,
ci_latency_missing, so learners can split on absent latency instead of
swallowing a magic value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields as dataclass_fields
from typing import Optional, Sequence

import numpy as np

from .ci_events import BuildEvent, BuildStatus, EventConfig, extract_build_events
from .corpus import Attachment, Corpus, IssueReport, LINK_FLAG_NAMES, Priority
from .errors import NegativeLatency
from .heuristics import HeuristicLabel, label_potential_unrelated

PRIORITY_ORDINAL = {
    Priority.BLOCKER: 5,
    Priority.CRITICAL: 4,
    Priority.MAJOR: 3,
    Priority.MINOR: 2,
    Priority.TRIVIAL: 1,
}

DEFAULT_CONFIG_SUFFIXES = (".yaml", ".xml", ".properties")
DEFAULT_SOURCE_SUFFIXES = (".java",)


@dataclass(frozen=True)
class FeatureConfig:
    config_suffixes: tuple[str, ...] = DEFAULT_CONFIG_SUFFIXES
    source_suffixes: tuple[str, ...] = DEFAULT_SOURCE_SUFFIXES
    # "count": number of prior failures sharing >=1 failed class;
    # "sum": total size of the intersections instead.
    similar_failures_mode: str = "count"

    @classmethod
    def from_mapping(cls, mapping) -> "FeatureConfig":
        kwargs = {}
        for key in ("config_suffixes", "source_suffixes"):
            if key in mapping:
                kwargs[key] = tuple(mapping[key])
        if "similar_failures_mode" in mapping:
            mode = mapping["similar_failures_mode"]
            if mode not in ("count", "sum"):
                raise ValueError(f"similar_failures_mode must be count|sum, got {mode!r}")
            kwargs["similar_failures_mode"] = mode
        return cls(**kwargs)


@dataclass(frozen=True)
class FeatureVector:
    # issue level
    priority_ord: int
    num_parallel_issues: int
    is_cross_projects: bool
    is_duplicate: bool
    is_blocker: bool
    is_blocked: bool
    is_regression: bool
    is_dependent: bool
    is_incorporates: bool
    is_required: bool
    is_reference: bool
    is_completes: bool
    is_testing: bool
    is_issue_split: bool
    is_supercedes: bool
    is_cloner: bool
    is_container: bool
    is_parent_feature: bool
    is_child_issue: bool
    # comment level
    num_prior_comments: int
    is_shared_same_emsg: bool
    num_similar_failures: int
    # push level
    ci_latency_hours: Optional[float]
    has_code_patch: bool
    has_config_files: bool
    config_lines_deleted: int
    config_lines_added: int
    config_lines_modified: int
    has_source_code: bool
    source_lines_added: int
    source_lines_deleted: int
    source_lines_modified: int
    modified_source_files: int

    def __post_init__(self):
        for name in ("num_parallel_issues", "num_prior_comments", "num_similar_failures",
                     "config_lines_deleted", "config_lines_added", "config_lines_modified",
                     "source_lines_added", "source_lines_deleted", "source_lines_modified",
                     "modified_source_files"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.has_code_patch:
            if self.ci_latency_hours is not None:
                raise ValueError("latency requires a code patch")
            if any((self.has_config_files, self.has_source_code,
                    self.config_lines_deleted, self.config_lines_added,
                    self.config_lines_modified, self.source_lines_added,
                    self.source_lines_deleted, self.source_lines_modified,
                    self.modified_source_files)):
                raise ValueError("patch-derived fields require a code patch")
        if not self.has_config_files and (self.config_lines_deleted or
                                          self.config_lines_added or
                                          self.config_lines_modified):
            raise ValueError("config line counts require has_config_files")
        if not self.has_source_code and (self.source_lines_added or
                                         self.source_lines_deleted or
                                         self.source_lines_modified or
                                         self.modified_source_files):
            raise ValueError("source line counts require has_source_code")


FEATURE_COLUMNS: tuple[str, ...] = tuple(
    f.name for f in dataclass_fields(FeatureVector)
)
assert len(FEATURE_COLUMNS) == 33

#: Learning-matrix layout: the 33 features plus the latency-missing indicator.
MATRIX_COLUMNS: tuple[str, ...] = FEATURE_COLUMNS + ("ci_latency_missing",)

BOOLEAN_FEATURES = frozenset(
    name for name in FEATURE_COLUMNS if name.startswith(("is_", "has_"))
) | {"ci_latency_missing"}
DURATION_FEATURES = frozenset({"ci_latency_hours"})
COUNT_FEATURES = frozenset(FEATURE_COLUMNS) - BOOLEAN_FEATURES - DURATION_FEATURES


def count_parallel_issues(issue: IssueReport, corpus: Corpus) -> int:
    """Other issues of the corpus opened on the same UTC calendar date."""
    date = issue.created_at.date()
    return sum(
        1
        for other in corpus.issues
        if other is not issue and other.created_at.date() == date
    )


def count_prior_comments(issue: IssueReport, event: BuildEvent) -> int:
    """Comments (of any author) strictly before the event's comment."""
    return event.comment_index


def shares_same_emsg(event: BuildEvent, prior_events: Sequence[BuildEvent]) -> bool:
    """True when every currently failed class already failed earlier.

    Requires a non-empty current set; containment is against the union of the
    prior failures' class sets.
    """
    if not event.failed_classes:
        return False
    union: set[str] = set()
    for prior in prior_events:
        union.update(prior.failed_classes)
    return event.failed_classes <= union


def count_similar_failures(
    event: BuildEvent, prior_events: Sequence[BuildEvent], mode: str = "count"
) -> int:
    """Prior failures whose failed classes intersect the current ones.

    mode="count" counts intersecting prior failures; mode="sum" adds up the
    intersection sizes instead.
    """
    if mode not in ("count", "sum"):
        raise ValueError(f"mode must be count|sum, got {mode!r}")
    total = 0
    for prior in prior_events:
        common = len(event.failed_classes & prior.failed_classes)
        if mode == "count":
            total += 1 if common > 0 else 0
        else:
            total += common
    return total


def compute_ci_latency(event: BuildEvent) -> Optional[float]:
    """Hours from patch attachment to the build event; None without a patch."""
    patch = event.triggering_patch
    if patch is None:
        return None
    delta = (event.posted_at - patch.attached_at).total_seconds() / 3600.0
    if delta < 0:
        raise NegativeLatency(
            f"{event.issue_id}: patch {patch.filename} postdates the build"
        )
    return delta


def _suffix_totals(patch: Attachment, suffixes: tuple[str, ...]) -> tuple[int, int, int, int]:
    """(added, deleted, modified, files-with-changes) over matching paths."""
    added = deleted = modified = files = 0
    lowered = tuple(s.lower() for s in suffixes)
    for path, change in (patch.line_stats or {}).items():
        if not path.lower().endswith(lowered):
            continue
        if change.total >= 1:
            added += change.added
            deleted += change.deleted
            modified += change.modified
            files += 1
    return added, deleted, modified, files


def extract_patch_features(
    patch: Optional[Attachment], config: Optional[FeatureConfig] = None
) -> dict:
    """Push-level sub-vector. A patch with no diff statistics still counts as
    a code patch; every counter just stays 0."""
    cfg = config or FeatureConfig()
    if patch is None:
        return {
            "has_code_patch": False,
            "has_config_files": False,
            "config_lines_deleted": 0,
            "config_lines_added": 0,
            "config_lines_modified": 0,
            "has_source_code": False,
            "source_lines_added": 0,
            "source_lines_deleted": 0,
            "source_lines_modified": 0,
            "modified_source_files": 0,
        }
    c_add, c_del, c_mod, _ = _suffix_totals(patch, cfg.config_suffixes)
    s_add, s_del, s_mod, s_files = _suffix_totals(patch, cfg.source_suffixes)
    return {
        "has_code_patch": True,
        "has_config_files": (c_add + c_del + c_mod) >= 1,
        "config_lines_deleted": c_del,
        "config_lines_added": c_add,
        "config_lines_modified": c_mod,
        "has_source_code": (s_add + s_del + s_mod) >= 1,
        "source_lines_added": s_add,
        "source_lines_deleted": s_del,
        "source_lines_modified": s_mod,
        "modified_source_files": s_files,
    }


def build_feature_vector(
    issue: IssueReport,
    event: BuildEvent,
    corpus: Corpus,
    prior_events: Sequence[BuildEvent],
    config: Optional[FeatureConfig] = None,
) -> FeatureVector:
    """Assemble all 33 fields for one Failure event.

    ``prior_events`` must be this issue's Failure events strictly before
    ``event``, in timeline order.
    """
    cfg = config or FeatureConfig()
    link_map = issue.link_flags.to_mapping()
    push = extract_patch_features(event.triggering_patch, cfg)
    return FeatureVector(
        priority_ord=PRIORITY_ORDINAL[issue.priority],
        num_parallel_issues=count_parallel_issues(issue, corpus),
        is_cross_projects=issue.is_cross_project,
        **{name: link_map[name] for name in LINK_FLAG_NAMES},
        num_prior_comments=count_prior_comments(issue, event),
        is_shared_same_emsg=shares_same_emsg(event, prior_events),
        num_similar_failures=count_similar_failures(
            event, prior_events, cfg.similar_failures_mode
        ),
        ci_latency_hours=compute_ci_latency(event),
        **push,
    )


@dataclass(frozen=True)
class FeatureTable:
    """Feature vectors for every Failure event of a corpus, keyed by
    (issue_id, event_index) where event_index counts the issue's events."""

    keys: tuple[tuple[str, int], ...]
    vectors: tuple[FeatureVector, ...]
    heuristic_flags: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.keys)


def extract_features(
    corpus: Corpus,
    bot: str,
    event_config: Optional[EventConfig] = None,
    feature_config: Optional[FeatureConfig] = None,
    keywords=None,
) -> FeatureTable:
    """Run event extraction, heuristic labeling, and feature assembly."""
    from .heuristics import DEFAULT_KEYWORDS

    keys = []
    vectors = []
    flags = []
    for issue in corpus.issues:
        events = extract_build_events(issue, bot, event_config)
        labels = label_potential_unrelated(
            issue, events, keywords or DEFAULT_KEYWORDS
        )
        flag_by_comment = {
            l.event.comment_index: l.flagged for l in labels
        }
        prior_failures: list[BuildEvent] = []
        for event_index, event in enumerate(events):
            if event.status is not BuildStatus.FAILURE:
                continue
            keys.append((issue.issue_id, event_index))
            vectors.append(
                build_feature_vector(issue, event, corpus, prior_failures, feature_config)
            )
            flags.append(flag_by_comment[event.comment_index])
            prior_failures.append(event)
    return FeatureTable(keys=tuple(keys), vectors=tuple(vectors),
                        heuristic_flags=tuple(flags))


def vector_to_matrix_row(vector: FeatureVector) -> list[float]:
    """Numeric encoding in MATRIX_COLUMNS order (34 values)."""
    row = []
    for name in FEATURE_COLUMNS:
        value = getattr(vector, name)
        if name == "ci_latency_hours":
            row.append(0.0 if value is None else float(value))
        else:
            row.append(float(value))
    row.append(1.0 if vector.ci_latency_hours is None else 0.0)
    return row


def table_to_matrix(table: FeatureTable) -> np.ndarray:
    """(n, 34) float64 learning matrix in MATRIX_COLUMNS order."""
    return np.array([vector_to_matrix_row(v) for v in table.vectors], dtype=np.float64)


def write_feature_csv(table: FeatureTable) -> str:
    """CSV interchange text: issue_id, event_index, the 33 features, and the
    heuristic flag. Missing latency renders as an empty cell."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["issue_id", "event_index", *FEATURE_COLUMNS, "heuristic_flag"])
    for key, vector, flag in zip(table.keys, table.vectors, table.heuristic_flags):
        row: list = [key[0], key[1]]
        for name in FEATURE_COLUMNS:
            value = getattr(vector, name)
            if value is None:
                row.append("")
            elif isinstance(value, bool):
                row.append(int(value))
            elif isinstance(value, float):
                row.append(repr(value))
            else:
                row.append(value)
        row.append(int(flag))
        writer.writerow(row)
    return buf.getvalue()


def read_feature_csv(text: str) -> tuple[list[tuple[str, int]], np.ndarray, np.ndarray, list[str]]:
    """Parse the CSV interchange format.

    Returns (keys, X, flags, columns) where X is the (n, 34) learning matrix
    in MATRIX_COLUMNS order and flags is the heuristic_flag column as bools.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    expected = ["issue_id", "event_index", *FEATURE_COLUMNS, "heuristic_flag"]
    if header != expected:
        raise ValueError("unexpected feature CSV header")
    keys = []
    rows = []
    flags = []
    latency_pos = FEATURE_COLUMNS.index("ci_latency_hours")
    for record in reader:
        if not record:
            continue
        keys.append((record[0], int(record[1])))
        cells = record[2:2 + len(FEATURE_COLUMNS)]
        row = []
        missing = 0.0
        for pos, cell in enumerate(cells):
            if pos == latency_pos and cell == "":
                row.append(0.0)
                missing = 1.0
            else:
                row.append(float(cell))
        row.append(missing)
        rows.append(row)
        flags.append(bool(int(record[2 + len(FEATURE_COLUMNS)])))
    X = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(MATRIX_COLUMNS)))
    return keys, X, np.array(flags, dtype=bool), list(MATRIX_COLUMNS)
