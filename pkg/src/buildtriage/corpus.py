"""Issue-tracker data model and newline-delimited JSON ingestion.

One line of input is one issue report. Records are self-describing JSON
objects (see the repository README for the exact key layout); unknown keys
are ignored so exports from richer trackers load unchanged. All values are
immutable after load and safe to share across pipeline stages.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import EmptyCorpus, MalformedRecord


class Priority(enum.Enum):
    BLOCKER = "Blocker"
    CRITICAL = "Critical"
    MAJOR = "Major"
    MINOR = "Minor"
    TRIVIAL = "Trivial"


#: Issue link kinds tracked as boolean features, in canonical order.
LINK_FLAG_NAMES: tuple[str, ...] = (
    "is_duplicate",
    "is_blocker",
    "is_blocked",
    "is_regression",
    "is_dependent",
    "is_incorporates",
    "is_required",
    "is_reference",
    "is_completes",
    "is_testing",
    "is_issue_split",
    "is_supercedes",
    "is_cloner",
    "is_container",
    "is_parent_feature",
    "is_child_issue",
)


@dataclass(frozen=True)
class LinkFlags:
    """Sixteen booleans marking which link kinds an issue participates in.

    Absent links are false; a flags object is usually built from the sparse
    "links" mapping of the export format.
    """

    flags: tuple[bool, ...] = (False,) * len(LINK_FLAG_NAMES)

    def __post_init__(self):
        if len(self.flags) != len(LINK_FLAG_NAMES):
            raise ValueError("expected one flag per link kind")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, bool]) -> "LinkFlags":
        return cls(tuple(bool(mapping.get(name, False)) for name in LINK_FLAG_NAMES))

    def __getitem__(self, name: str) -> bool:
        return self.flags[LINK_FLAG_NAMES.index(name)]

    def to_mapping(self) -> dict[str, bool]:
        return dict(zip(LINK_FLAG_NAMES, self.flags))


@dataclass(frozen=True)
class LineChange:
    added: int = 0
    deleted: int = 0
    modified: int = 0

    @property
    def total(self) -> int:
        return self.added + self.deleted + self.modified


@dataclass(frozen=True)
class Attachment:
    filename: str
    attached_at: datetime
    # per-file line counts keyed by path inside the patch; None when the
    # export carried no diff statistics for this file
    line_stats: Optional[Mapping[str, LineChange]] = None


@dataclass(frozen=True)
class Comment:
    author: str
    posted_at: datetime
    body: str
    attachments: tuple[Attachment, ...] = ()


@dataclass(frozen=True)
class IssueReport:
    issue_id: str
    project: str
    created_at: datetime
    priority: Priority
    link_flags: LinkFlags = field(default_factory=LinkFlags)
    is_cross_project: bool = False
    comments: tuple[Comment, ...] = ()
    attachments: tuple[Attachment, ...] = ()


@dataclass(frozen=True)
class Corpus:
    project: str
    issues: tuple[IssueReport, ...]

    def __len__(self) -> int:
        return len(self.issues)


@dataclass(frozen=True)
class Violation:
    issue_id: str
    rule: str
    detail: str = ""


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 string into a UTC datetime with second resolution.

    Naive timestamps are taken as UTC; aware ones are converted. Sub-second
    precision is truncated, not rounded.
    """
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_attachment(obj, where: str, line_no: int) -> Attachment:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, f"{where}: attachment must be an object")
    filename = obj.get("filename")
    if not isinstance(filename, str):
        raise MalformedRecord(line_no, f"{where}: attachment filename must be a string")
    try:
        attached_at = parse_timestamp(obj["attached_at"])
    except KeyError:
        raise MalformedRecord(line_no, f"{where}: attachment missing attached_at")
    except ValueError as exc:
        raise MalformedRecord(line_no, f"{where}: bad attached_at ({exc})")
    raw_stats = obj.get("line_stats")
    line_stats = None
    if raw_stats is not None:
        if not isinstance(raw_stats, dict):
            raise MalformedRecord(line_no, f"{where}: line_stats must be an object")
        line_stats = {}
        for path, counts in raw_stats.items():
            if not isinstance(counts, dict):
                raise MalformedRecord(line_no, f"{where}: line_stats[{path!r}] must be an object")
            try:
                line_stats[path] = LineChange(
                    added=int(counts.get("added", 0)),
                    deleted=int(counts.get("deleted", 0)),
                    modified=int(counts.get("modified", 0)),
                )
            except (TypeError, ValueError):
                raise MalformedRecord(line_no, f"{where}: non-integer line counts for {path!r}")
    return Attachment(filename=filename, attached_at=attached_at, line_stats=line_stats)


def _parse_comment(obj, index: int, line_no: int) -> Comment:
    where = f"comments[{index}]"
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, f"{where}: comment must be an object")
    author = obj.get("author")
    body = obj.get("body")
    if not isinstance(author, str) or not author:
        raise MalformedRecord(line_no, f"{where}: author must be a non-empty string")
    if not isinstance(body, str):
        raise MalformedRecord(line_no, f"{where}: body must be a string")
    try:
        posted_at = parse_timestamp(obj["posted_at"])
    except KeyError:
        raise MalformedRecord(line_no, f"{where}: missing posted_at")
    except ValueError as exc:
        raise MalformedRecord(line_no, f"{where}: bad posted_at ({exc})")
    attachments = tuple(
        _parse_attachment(a, f"{where}.attachments[{i}]", line_no)
        for i, a in enumerate(obj.get("attachments", []))
    )
    return Comment(author=author, posted_at=posted_at, body=body, attachments=attachments)


def _parse_issue(obj: dict, project: str, line_no: int) -> IssueReport:
    issue_id = obj.get("issue_id")
    if not isinstance(issue_id, str) or not issue_id:
        raise MalformedRecord(line_no, "issue_id must be a non-empty string")
    rec_project = obj.get("project")
    if not isinstance(rec_project, str) or not rec_project:
        raise MalformedRecord(line_no, "project must be a non-empty string")
    if rec_project != project:
        raise MalformedRecord(
            line_no, f"record belongs to project {rec_project!r}, expected {project!r}"
        )
    try:
        created_at = parse_timestamp(obj["created_at"])
    except KeyError:
        raise MalformedRecord(line_no, "missing created_at")
    except ValueError as exc:
        raise MalformedRecord(line_no, f"bad created_at ({exc})")
    raw_priority = obj.get("priority")
    try:
        priority = Priority(raw_priority)
    except ValueError:
        raise MalformedRecord(line_no, f"unknown priority {raw_priority!r}")
    links = obj.get("links", {})
    if not isinstance(links, dict):
        raise MalformedRecord(line_no, "links must be an object")
    link_flags = LinkFlags.from_mapping(links)
    is_cross_project = obj.get("is_cross_project", False)
    if not isinstance(is_cross_project, bool):
        raise MalformedRecord(line_no, "is_cross_project must be a boolean")
    raw_comments = obj.get("comments", [])
    if not isinstance(raw_comments, list):
        raise MalformedRecord(line_no, "comments must be a list")
    comments = [_parse_comment(c, i, line_no) for i, c in enumerate(raw_comments)]
    # Re-sort out-of-order exports; the sort is stable so ties keep input order.
    comments.sort(key=lambda c: c.posted_at)
    for c in comments:
        if c.posted_at < created_at:
            raise MalformedRecord(
                line_no, f"comment at {format_timestamp(c.posted_at)} precedes issue creation"
            )
    attachments = tuple(
        _parse_attachment(a, f"attachments[{i}]", line_no)
        for i, a in enumerate(obj.get("attachments", []))
    )
    return IssueReport(
        issue_id=issue_id,
        project=rec_project,
        created_at=created_at,
        priority=priority,
        link_flags=link_flags,
        is_cross_project=is_cross_project,
        comments=tuple(comments),
        attachments=attachments,
    )


def load_corpus(path, project: str) -> Corpus:
    """Load every record of ``path`` that belongs to ``project``.

    Raises MalformedRecord (with the 1-based line number) for records that
    cannot be represented, and EmptyCorpus when nothing parses. Comments are
    re-sorted by timestamp, so a loaded corpus always satisfies the ordering
    invariant.
    """
    issues = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise MalformedRecord(line_no, "record must be a JSON object")
            issues.append(_parse_issue(obj, project, line_no))
    if not issues:
        raise EmptyCorpus(f"no issues for project {project!r} in {path}")
    return Corpus(project=project, issues=tuple(issues))


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check corpus-level invariants and return one Violation per breach.

    Violations are values, not exceptions: a validation pass over a corpus
    assembled by hand (or loaded before this package enforced an invariant)
    reports everything at once instead of stopping at the first problem.
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    for issue in corpus.issues:
        if issue.issue_id in seen:
            violations.append(Violation(issue.issue_id, "duplicate_id"))
        seen.add(issue.issue_id)
        if issue.project != corpus.project:
            violations.append(
                Violation(issue.issue_id, "project_mismatch", issue.project)
            )
        for prev, cur in zip(issue.comments, issue.comments[1:]):
            if cur.posted_at < prev.posted_at:
                violations.append(Violation(issue.issue_id, "unordered_comments"))
                break
        for c in issue.comments:
            if c.posted_at < issue.created_at:
                violations.append(
                    Violation(issue.issue_id, "comment_before_created",
                              format_timestamp(c.posted_at))
                )
                break
        all_attachments = list(issue.attachments)
        for c in issue.comments:
            all_attachments.extend(c.attachments)
        for a in all_attachments:
            if not a.filename:
                violations.append(Violation(issue.issue_id, "empty_filename"))
    return violations


def _attachment_to_obj(a: Attachment) -> dict:
    obj: dict = {"filename": a.filename, "attached_at": format_timestamp(a.attached_at)}
    if a.line_stats is not None:
        obj["line_stats"] = {
            path: {"added": lc.added, "deleted": lc.deleted, "modified": lc.modified}
            for path, lc in a.line_stats.items()
        }
    return obj


def serialize_corpus(corpus: Corpus) -> str:
    """Render a corpus back to the newline-delimited export format.

    Only true link flags are written; loading the result reproduces the
    corpus exactly (round-trip identity).
    """
    lines = []
    for issue in corpus.issues:
        obj: dict = {
            "issue_id": issue.issue_id,
            "project": issue.project,
            "created_at": format_timestamp(issue.created_at),
            "priority": issue.priority.value,
            "links": {k: True for k, v in issue.link_flags.to_mapping().items() if v},
            "is_cross_project": issue.is_cross_project,
            "comments": [
                {
                    "author": c.author,
                    "posted_at": format_timestamp(c.posted_at),
                    "body": c.body,
                    "attachments": [_attachment_to_obj(a) for a in c.attachments],
                }
                for c in issue.comments
            ],
        }
        if issue.attachments:
            obj["attachments"] = [_attachment_to_obj(a) for a in issue.attachments]
        lines.append(json.dumps(obj, sort_keys=True))
    return "\n".join(lines) + "\n"
