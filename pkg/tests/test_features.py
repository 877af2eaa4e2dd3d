"""Feature extraction, the 33-column vector, and the CSV interchange format."""

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from buildtriage.ci_events import BuildEvent, BuildStatus
from buildtriage.corpus import Attachment, Corpus, IssueReport, Priority
from buildtriage.errors import NegativeLatency
from buildtriage.features import (
    DEFAULT_CONFIG_SUFFIXES,
    DEFAULT_SOURCE_SUFFIXES,
    FEATURE_COLUMNS,
    MATRIX_COLUMNS,
    PRIORITY_ORDINAL,
    FeatureConfig,
    FeatureVector,
    compute_ci_latency,
    count_parallel_issues,
    count_prior_comments,
    count_similar_failures,
    read_feature_csv,
    shares_same_emsg,
    table_to_matrix,
    vector_to_matrix_row,
    write_feature_csv,
)
from tests.conftest import EXPECTED_FEATURES_PATH

UTC = timezone.utc
T0 = datetime(2023, 3, 6, 8, 0, 0, tzinfo=UTC)

VECTOR_DEFAULTS = dict(
    priority_ord=3,
    num_parallel_issues=0,
    is_cross_projects=False,
    is_duplicate=False,
    is_blocker=False,
    is_blocked=False,
    is_regression=False,
    is_dependent=False,
    is_incorporates=False,
    is_required=False,
    is_reference=False,
    is_completes=False,
    is_testing=False,
    is_issue_split=False,
    is_supercedes=False,
    is_cloner=False,
    is_container=False,
    is_parent_feature=False,
    is_child_issue=False,
    num_prior_comments=0,
    is_shared_same_emsg=False,
    num_similar_failures=0,
    ci_latency_hours=None,
    has_code_patch=False,
    has_config_files=False,
    config_lines_deleted=0,
    config_lines_added=0,
    config_lines_modified=0,
    has_source_code=False,
    source_lines_added=0,
    source_lines_deleted=0,
    source_lines_modified=0,
    modified_source_files=0,
)


def make_vector(**over):
    kwargs = dict(VECTOR_DEFAULTS)
    kwargs.update(over)
    return FeatureVector(**kwargs)


def make_event(failed=frozenset(), patch=None, minute=60):
    return BuildEvent(
        issue_id="TST-1",
        comment_index=0,
        posted_at=T0 + timedelta(minutes=minute),
        status=BuildStatus.FAILURE,
        failed_classes=frozenset(failed),
        raw_body="-1",
        triggering_patch=patch,
    )


class TestColumnLayout:
    def test_column_counts(self):
        assert len(FEATURE_COLUMNS) == 33
        assert len(MATRIX_COLUMNS) == 34
        assert MATRIX_COLUMNS[:-1] == FEATURE_COLUMNS
        assert MATRIX_COLUMNS[-1] == "ci_latency_missing"

    def test_priority_ordinal(self):
        assert PRIORITY_ORDINAL[Priority.BLOCKER] == 5
        assert PRIORITY_ORDINAL[Priority.CRITICAL] == 4
        assert PRIORITY_ORDINAL[Priority.MAJOR] == 3
        assert PRIORITY_ORDINAL[Priority.MINOR] == 2
        assert PRIORITY_ORDINAL[Priority.TRIVIAL] == 1

    def test_default_suffixes(self):
        assert DEFAULT_CONFIG_SUFFIXES == (".yaml", ".xml", ".properties")
        assert DEFAULT_SOURCE_SUFFIXES == (".java",)


class TestFeatureVectorInvariants:
    def test_defaults_valid(self):
        make_vector()

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            make_vector(num_prior_comments=-1)

    def test_latency_requires_patch(self):
        with pytest.raises(ValueError):
            make_vector(ci_latency_hours=1.0, has_code_patch=False)

    def test_source_counts_require_source_flag(self):
        with pytest.raises(ValueError):
            make_vector(has_code_patch=True, source_lines_added=3)

    def test_config_counts_require_config_flag(self):
        with pytest.raises(ValueError):
            make_vector(has_code_patch=True, config_lines_added=3)

    def test_patchless_row_must_be_all_falsy(self):
        with pytest.raises(ValueError):
            make_vector(has_source_code=True)


class TestHelpers:
    def test_count_prior_comments_is_comment_index(self, falcon_events):
        event = falcon_events["FALCON-101"][1]
        assert count_prior_comments(None, event) == 3

    def test_parallel_issues_same_utc_date(self):
        def issue(iid, created):
            return IssueReport(
                issue_id=iid, project="TST", created_at=created,
                priority=Priority.MAJOR,
            )

        a = issue("TST-1", datetime(2023, 3, 6, 23, 0, tzinfo=UTC))
        b = issue("TST-2", datetime(2023, 3, 6, 1, 0, tzinfo=UTC))
        c = issue("TST-3", datetime(2023, 3, 7, 0, 30, tzinfo=UTC))
        corpus = Corpus(project="TST", issues=(a, b, c))
        assert count_parallel_issues(a, corpus) == 1
        assert count_parallel_issues(c, corpus) == 0

    def test_shares_same_emsg_containment(self):
        priors = [make_event({"a.B", "a.C"}), make_event({"a.D"})]
        assert shares_same_emsg(make_event({"a.B"}), priors) is True
        assert shares_same_emsg(make_event({"a.B", "a.D"}), priors) is True
        assert shares_same_emsg(make_event({"a.B", "a.E"}), priors) is False

    def test_shares_same_emsg_empty_current(self):
        assert shares_same_emsg(make_event(), [make_event({"a.B"})]) is False

    def test_count_similar_failures_modes(self):
        priors = [make_event({"a.B", "a.C"}), make_event({"a.C", "a.D"}),
                  make_event({"a.E"})]
        current = make_event({"a.B", "a.C"})
        assert count_similar_failures(current, priors, "count") == 2
        assert count_similar_failures(current, priors, "sum") == 3

    def test_count_similar_failures_bad_mode(self):
        with pytest.raises(ValueError):
            count_similar_failures(make_event(), [], "avg")

    def test_ci_latency(self):
        patch = Attachment(filename="x.patch", attached_at=T0)
        assert compute_ci_latency(make_event(patch=patch, minute=90)) == 1.5
        assert compute_ci_latency(make_event(patch=None)) is None

    def test_negative_latency_rejected(self):
        late = Attachment(
            filename="x.patch", attached_at=T0 + timedelta(hours=5)
        )
        with pytest.raises(NegativeLatency):
            compute_ci_latency(make_event(patch=late, minute=60))


class TestFeatureConfig:
    def test_from_mapping(self):
        config = FeatureConfig.from_mapping(
            {"source_suffixes": [".java", ".scala"], "similar_failures_mode": "sum"}
        )
        assert config.source_suffixes == (".java", ".scala")
        assert config.similar_failures_mode == "sum"
        assert config.config_suffixes == DEFAULT_CONFIG_SUFFIXES

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            FeatureConfig.from_mapping({"similar_failures_mode": "avg"})


class TestExtraction:
    def test_csv_matches_reference_bytes(self, falcon_table):
        assert write_feature_csv(falcon_table) == EXPECTED_FEATURES_PATH.read_text()

    def test_rows_are_failures_only(self, falcon_table):
        assert len(falcon_table.keys) == 12

    def test_event_index_counts_all_events(self, falcon_table):
        # the success at FALCON-106's first bot comment shifts the failure
        # indices up even though it gets no row itself
        keys = list(falcon_table.keys)
        assert ("FALCON-106", 1) in keys
        assert ("FALCON-106", 0) not in keys

    def test_flag_alignment(self, falcon_table):
        flagged_keys = [
            key
            for key, flag in zip(falcon_table.keys, falcon_table.heuristic_flags)
            if flag
        ]
        assert flagged_keys == [
            ("FALCON-101", 0),
            ("FALCON-101", 2),
            ("FALCON-102", 0),
        ]

    def test_shared_emsg_on_repeat_failure(self, falcon_table):
        by_key = dict(zip(falcon_table.keys, falcon_table.vectors))
        assert by_key[("FALCON-103", 3)].is_shared_same_emsg is True
        assert by_key[("FALCON-103", 0)].is_shared_same_emsg is False


class TestMatrixLayout:
    def test_row_length_and_missing_indicator(self):
        row = vector_to_matrix_row(make_vector())
        assert len(row) == 34
        lat = MATRIX_COLUMNS.index("ci_latency_hours")
        assert row[lat] == 0.0
        assert row[-1] == 1.0

    def test_present_latency(self):
        row = vector_to_matrix_row(
            make_vector(has_code_patch=True, ci_latency_hours=2.5)
        )
        assert row[MATRIX_COLUMNS.index("ci_latency_hours")] == 2.5
        assert row[-1] == 0.0

    def test_table_to_matrix_shape(self, falcon_table):
        X = table_to_matrix(falcon_table)
        assert X.shape == (12, 34)
        assert X.dtype == np.float64


class TestCsvRoundTrip:
    def test_round_trip(self, falcon_table):
        text = write_feature_csv(falcon_table)
        keys, X, flags, names = read_feature_csv(text)
        assert keys == [(i, e) for i, e in falcon_table.keys]
        assert names == list(MATRIX_COLUMNS)
        np.testing.assert_array_equal(X, table_to_matrix(falcon_table))
        np.testing.assert_array_equal(
            flags, np.array(falcon_table.heuristic_flags, dtype=bool)
        )

    def test_missing_latency_round_trips(self, falcon_table):
        text = write_feature_csv(falcon_table)
        keys, X, flags, names = read_feature_csv(text)
        row = keys.index(("FALCON-104", 0))
        lat = names.index("ci_latency_hours")
        assert X[row, lat] == 0.0
        assert X[row, names.index("ci_latency_missing")] == 1.0

    def test_header_must_match_exactly(self, falcon_table):
        text = write_feature_csv(falcon_table)
        lines = text.splitlines()
        lines[0] = lines[0].replace("priority_ord", "priority")
        with pytest.raises(ValueError, match="unexpected feature CSV header"):
            read_feature_csv("\n".join(lines) + "\n")
