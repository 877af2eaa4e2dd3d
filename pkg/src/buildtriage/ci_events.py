"""CI-bot detection and build-event extraction.

The CI bot announces build results as ordinary comments; these functions find
the bot account, turn each of its comments into a BuildEvent, and pull failed
test/exception class names out of failure bodies. The matching rules (markers,
class regex, patch suffixes) are configurable per project.
"""

from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

from .corpus import Attachment, Corpus, IssueReport
from .errors import NoBotFound

DEFAULT_FAILURE_MARKERS = ("-1", "FAILURE", "Tests failed", "build failed")
DEFAULT_SUCCESS_MARKERS = ("+1 overall", "SUCCESS")
# JUnit-style test names plus exception classes, fully qualified.
DEFAULT_FAILED_CLASS_REGEX = r"([A-Za-z_][\w$]*\.)+(Test[\w$]*|[\w$]*Test|[\w$]*Exception)"
DEFAULT_PATCH_SUFFIXES = (".patch", ".diff")


class ParseWarning(UserWarning):
    """A bot comment whose body matched neither marker set."""


class BuildStatus(enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass(frozen=True)
class EventConfig:
    qa_bot_override: Optional[str] = None
    failure_markers: tuple[str, ...] = DEFAULT_FAILURE_MARKERS
    success_markers: tuple[str, ...] = DEFAULT_SUCCESS_MARKERS
    failed_class_regex: str = DEFAULT_FAILED_CLASS_REGEX
    patch_suffixes: tuple[str, ...] = DEFAULT_PATCH_SUFFIXES

    @classmethod
    def from_mapping(cls, mapping) -> "EventConfig":
        kwargs = {}
        if "qa_bot_override" in mapping:
            kwargs["qa_bot_override"] = mapping["qa_bot_override"]
        for key in ("failure_markers", "success_markers", "patch_suffixes"):
            if key in mapping:
                kwargs[key] = tuple(mapping[key])
        if "failed_class_regex" in mapping:
            kwargs["failed_class_regex"] = mapping["failed_class_regex"]
        return cls(**kwargs)


@dataclass(frozen=True)
class BuildEvent:
    issue_id: str
    comment_index: int
    posted_at: datetime
    status: BuildStatus
    failed_classes: frozenset[str]
    raw_body: str
    triggering_patch: Optional[Attachment] = None

    @property
    def is_failure(self) -> bool:
        return self.status is BuildStatus.FAILURE


_QA_TOKEN = re.compile(r"\bqa\b", re.IGNORECASE)


def detect_qa_bot(corpus: Corpus, config: Optional[EventConfig] = None) -> str:
    """Return the comment author acting as the project's CI bot.

    The canonical account is "<project> QA" (case-insensitive). When no author
    matches that exactly, any author containing the word "QA" qualifies, and
    the one with the most comments wins; ties break lexicographically.
    """
    if config is not None and config.qa_bot_override:
        return config.qa_bot_override
    counts: dict[str, int] = {}
    for issue in corpus.issues:
        for comment in issue.comments:
            counts[comment.author] = counts.get(comment.author, 0) + 1
    canonical = f"{corpus.project} qa".lower()
    exact = [a for a in counts if a.lower() == canonical]
    if exact:
        return min(exact, key=lambda a: (-counts[a], a))
    tokened = [a for a in counts if _QA_TOKEN.search(a)]
    if tokened:
        return min(tokened, key=lambda a: (-counts[a], a))
    raise NoBotFound(f"no QA author among {len(counts)} commenters of {corpus.project}")


def _first_marker_pos(body_lower: str, markers: Sequence[str]) -> Optional[int]:
    positions = [body_lower.find(m.lower()) for m in markers]
    positions = [p for p in positions if p >= 0]
    return min(positions) if positions else None


def extract_failed_classes(body: str, config: Optional[EventConfig] = None) -> frozenset[str]:
    """Pull fully-qualified failed test/exception class names from a body.

    Deduplicated and order-free, so the result is invariant under permuting
    the body's lines.
    """
    pattern = (config or EventConfig()).failed_class_regex
    return frozenset(m.group(0) for m in re.finditer(pattern, body))


def _patch_candidates(issue: IssueReport, suffixes: tuple[str, ...]) -> list[Attachment]:
    candidates = [a for a in issue.attachments]
    for comment in issue.comments:
        candidates.extend(comment.attachments)
    lowered = tuple(s.lower() for s in suffixes)
    return [a for a in candidates if a.filename.lower().endswith(lowered)]


def extract_build_events(
    issue: IssueReport, bot: str, config: Optional[EventConfig] = None
) -> list[BuildEvent]:
    """Turn every comment authored by ``bot`` into a BuildEvent, in order.

    A body is a Failure when it contains a failure marker with no success
    marker before it; a body with only success markers is a Success. A bot
    comment matching neither set cannot be classified, and is conservatively
    treated as a Failure with no failed classes (plus a ParseWarning).

    The triggering patch is the most recently attached patch/diff file
    strictly before the event, searching issue-level and comment-level
    attachments alike.
    """
    cfg = config or EventConfig()
    patches = _patch_candidates(issue, cfg.patch_suffixes)
    events = []
    for idx, comment in enumerate(issue.comments):
        if comment.author != bot:
            continue
        body_lower = comment.body.lower()
        fpos = _first_marker_pos(body_lower, cfg.failure_markers)
        spos = _first_marker_pos(body_lower, cfg.success_markers)
        if fpos is not None and (spos is None or fpos < spos):
            status = BuildStatus.FAILURE
            failed = extract_failed_classes(comment.body, cfg)
        elif spos is not None:
            status = BuildStatus.SUCCESS
            failed = frozenset()
        else:
            warnings.warn(
                f"{issue.issue_id}: bot comment {idx} matches no marker; "
                "treating as Failure",
                ParseWarning,
                stacklevel=2,
            )
            status = BuildStatus.FAILURE
            failed = frozenset()
        prior = [p for p in patches if p.attached_at < comment.posted_at]
        triggering = None
        if prior:
            best = max(range(len(prior)), key=lambda i: (prior[i].attached_at, i))
            triggering = prior[best]
        events.append(
            BuildEvent(
                issue_id=issue.issue_id,
                comment_index=idx,
                posted_at=comment.posted_at,
                status=status,
                failed_classes=failed,
                raw_body=comment.body,
                triggering_patch=triggering,
            )
        )
    return events
