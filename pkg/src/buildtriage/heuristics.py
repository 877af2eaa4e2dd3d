"""Keyword labeling of build failures and the time-misspent measure.

A build failure is flagged as potentially unrelated to its triggering change
when a developer, commenting after the failure and before the next build,
uses a dismissal phrase ("unrelated", "not related", ...). The gap between
the failure notification and that comment is the time developers spent before
ruling the failure out.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from .ci_events import BuildEvent, BuildStatus
from .corpus import Comment, Corpus, IssueReport
from .errors import NotFlagged

#: Dismissal phrases; multi-word entries must appear as contiguous tokens.
DEFAULT_KEYWORDS: tuple[str, ...] = (
    "not related",
    "unrelated",
    "irrelevant",
    "not relevant",
    "not connected",
    "unconnected",
    "not linked",
    "uncorrelated",
    "not correlated",
)

_TOKEN = re.compile(r"[a-z0-9_]+")


@dataclass(frozen=True)
class HeuristicLabel:
    event: BuildEvent
    flagged: bool
    # index into the issue's comment list, not into the scan window
    matching_comment_index: Optional[int] = None
    matched_keyword: Optional[str] = None

    def __post_init__(self):
        has_match = self.matching_comment_index is not None and self.matched_keyword is not None
        if self.flagged != has_match:
            raise ValueError("flagged labels must carry a match; unflagged must not")


@dataclass(frozen=True)
class TimeMisspent:
    event: BuildEvent
    hours: float

    def __post_init__(self):
        if self.hours < 0:
            raise ValueError("time misspent cannot be negative")


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def scan_keywords(
    window: Sequence[Comment], keywords: Sequence[str] = DEFAULT_KEYWORDS
) -> Optional[tuple[int, str]]:
    """Find the first comment of ``window`` containing a keyword.

    Matching is case-insensitive on token boundaries, so "annotated" does not
    hit "not", and "not related" only matches as two adjacent words. Returns
    (window index, keyword) for the earliest matching comment, scanning the
    keywords in their given order within each comment; None when nothing
    matches.
    """
    keyword_tokens = [(kw, tuple(_tokenize(kw))) for kw in keywords]
    for idx, comment in enumerate(window):
        tokens = _tokenize(comment.body)
        for kw, needle in keyword_tokens:
            k = len(needle)
            if k == 0:
                continue
            if any(tuple(tokens[i:i + k]) == needle for i in range(len(tokens) - k + 1)):
                return idx, kw
    return None


def label_potential_unrelated(
    issue: IssueReport,
    events: Sequence[BuildEvent],
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
) -> list[HeuristicLabel]:
    """Label every Failure event of one issue.

    The scan window of a failure is every developer comment strictly after
    the failure's comment and strictly before the next build event (or the
    end of the issue). Bot comments never match; Success events are never
    flagged and get no label.
    """
    bot_indices = {e.comment_index for e in events}
    labels = []
    for pos, event in enumerate(events):
        if event.status is not BuildStatus.FAILURE:
            continue
        window_end = (
            events[pos + 1].comment_index if pos + 1 < len(events) else len(issue.comments)
        )
        window_pairs = [
            (i, issue.comments[i])
            for i in range(event.comment_index + 1, window_end)
            if i not in bot_indices
        ]
        hit = scan_keywords([c for _, c in window_pairs], keywords)
        if hit is None:
            labels.append(HeuristicLabel(event=event, flagged=False))
        else:
            window_idx, kw = hit
            labels.append(
                HeuristicLabel(
                    event=event,
                    flagged=True,
                    matching_comment_index=window_pairs[window_idx][0],
                    matched_keyword=kw,
                )
            )
    return labels


def compute_time_misspent(label: HeuristicLabel, issue: IssueReport) -> TimeMisspent:
    """Hours between the failure notification and the dismissing comment."""
    if not label.flagged:
        raise NotFlagged(f"{label.event.issue_id}: event was not flagged")
    comment = issue.comments[label.matching_comment_index]
    delta = comment.posted_at - label.event.posted_at
    return TimeMisspent(event=label.event, hours=delta.total_seconds() / 3600.0)


def prevalence(events: Sequence[BuildEvent], labels: Sequence[HeuristicLabel]) -> float:
    """Flagged-failure count divided by total-failure count."""
    total = sum(1 for e in events if e.status is BuildStatus.FAILURE)
    if total == 0:
        raise ZeroDivisionError("no failures to compute prevalence over")
    flagged = sum(1 for l in labels if l.flagged)
    return flagged / total


def summarize_time_misspent(
    per_project: dict[str, Sequence[float]],
) -> dict[str, dict[str, float]]:
    """Per-project and pooled summary statistics of time-misspent hours.

    Returns, for every project plus a synthetic "total" row over the pooled
    values: count, median, mean, and standard deviation (0 for singletons).
    """
    summary: dict[str, dict[str, float]] = {}
    pooled: list[float] = []
    for project in sorted(per_project):
        hours = list(per_project[project])
        pooled.extend(hours)
        if hours:
            summary[project] = {
                "count": len(hours),
                "median_hours": statistics.median(hours),
                "mean_hours": statistics.fmean(hours),
                "stdev_hours": statistics.pstdev(hours) if len(hours) > 1 else 0.0,
            }
        else:
            summary[project] = {"count": 0, "median_hours": 0.0,
                                "mean_hours": 0.0, "stdev_hours": 0.0}
    if pooled:
        summary["total"] = {
            "count": len(pooled),
            "median_hours": statistics.median(pooled),
            "mean_hours": statistics.fmean(pooled),
            "stdev_hours": statistics.pstdev(pooled) if len(pooled) > 1 else 0.0,
        }
    return summary


def label_corpus(
    corpus: Corpus,
    events_by_issue: dict[str, Sequence[BuildEvent]],
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
) -> dict[str, list[HeuristicLabel]]:
    """Label every issue of a corpus; keys are issue ids."""
    out = {}
    for issue in corpus.issues:
        events = events_by_issue.get(issue.issue_id, ())
        out[issue.issue_id] = label_potential_unrelated(issue, events, keywords)
    return out
