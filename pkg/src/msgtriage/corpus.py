"""Ingestion of staff messages, reference files, and the PHI redaction hook.

All interchange files are UTF-8 CSV with a header row. Malformed message rows
never abort an ingest; they land in a reject list (with row numbers) that the
CLI writes alongside the input as a sidecar.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)

MESSAGE_COLUMNS = (
    "messageId",
    "encounterId",
    "threadIndex",
    "sentAt",
    "senderId",
    "recipientPool",
    "body",
)


class CorpusError(ValueError):
    """Unrecoverable ingest problem: unreadable file or bad schema."""


@dataclass(frozen=True)
class StaffMessage:
    message_id: str
    encounter_id: str
    thread_index: int
    sent_at: datetime  # always UTC
    sender_id: str
    recipient_pool: str
    body: str  # may be empty


@dataclass(frozen=True)
class EncounterThread:
    encounter_id: str
    messages: tuple[StaffMessage, ...]  # ordered by thread_index, contiguous from 0
    office_id: str | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise CorpusError(f"thread {self.encounter_id!r} is empty")
        for expected, message in enumerate(self.messages):
            if message.encounter_id != self.encounter_id:
                raise CorpusError(
                    f"thread {self.encounter_id!r} contains message "
                    f"{message.message_id!r} from another encounter"
                )
            if message.thread_index != expected:
                raise CorpusError(
                    f"thread {self.encounter_id!r} indexes are not contiguous from 0"
                )


@dataclass(frozen=True)
class StaffDirectoryEntry:
    staff_id: str
    display_name: str
    team_id: str
    active: bool


@dataclass(frozen=True)
class CallRecord:
    call_id: str
    agent_id: str
    team_id: str
    received_at: datetime
    handled: bool


@dataclass
class OfficeMapping:
    """encounterId -> officeId merged from two reference files (first wins)."""

    assignments: dict[str, str] = field(default_factory=dict)
    conflicts: list[tuple[str, str, str]] = field(default_factory=list)  # (enc, kept, dropped)

    def office_for(self, encounter_id: str) -> str | None:
        return self.assignments.get(encounter_id)


@dataclass(frozen=True)
class RejectedRow:
    row_number: int  # 1-based, counting the header as row 1
    reason: str
    raw: tuple[str, ...]


class Corpus:
    """Accepted messages in file order, grouped into validated threads."""

    def __init__(self, messages: Iterable[StaffMessage]):
        self.messages: tuple[StaffMessage, ...] = tuple(messages)
        by_encounter: dict[str, list[StaffMessage]] = {}
        for message in self.messages:
            by_encounter.setdefault(message.encounter_id, []).append(message)
        self.threads: dict[str, EncounterThread] = {}
        for encounter_id, group in by_encounter.items():
            group.sort(key=lambda m: m.thread_index)
            self.threads[encounter_id] = EncounterThread(
                encounter_id=encounter_id, messages=tuple(group)
            )
        self._by_id = {m.message_id: m for m in self.messages}

    def __len__(self) -> int:
        return len(self.messages)

    def message(self, message_id: str) -> StaffMessage:
        return self._by_id[message_id]

    def thread_of(self, message: StaffMessage | str) -> EncounterThread:
        if isinstance(message, str):
            message = self._by_id[message]
        return self.threads[message.encounter_id]


@dataclass
class IngestResult:
    corpus: Corpus
    rejects: list[RejectedRow]


class Redactor:
    """Pattern-based PHI redaction applied before text leaves the process.

    Patterns are plain regexes with fixed replacement placeholders; the hook
    deliberately stays simple so its behavior is auditable.
    """

    def __init__(self, patterns: Sequence[tuple[str, str]]):
        self._rules = [(re.compile(p, re.IGNORECASE), repl) for p, repl in patterns]

    def redact(self, text: str) -> str:
        for pattern, replacement in self._rules:
            text = pattern.sub(replacement, text)
        return text

    @classmethod
    def from_file(cls, path: str | Path) -> "Redactor":
        """Load [{"pattern": ..., "replacement": ...}, ...] from JSON."""
        try:
            entries = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError(f"cannot read redaction pattern file {path}: {exc}") from exc
        return cls([(e["pattern"], e["replacement"]) for e in entries])

    @classmethod
    def default(cls) -> "Redactor":
        return cls.from_file(Path(__file__).parent / "data" / "redaction.json")


def parse_timestamp(value: str) -> datetime:
    """ISO-8601 to aware UTC datetime; naive values are taken as UTC."""
    raw = value.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    parsed = datetime.fromisoformat(raw)
    if parsed.tzinfo is None:
        return parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _open_rows(path: str | Path, required: Sequence[str]) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise CorpusError(f"{path} is empty (missing header)")
    header = rows[0]
    missing = [column for column in required if column not in header]
    if missing:
        raise CorpusError(f"{path} is missing required columns: {', '.join(missing)}")
    return header, rows[1:]


def ingest_messages(path: str | Path, redactor: Redactor | None = None) -> IngestResult:
    """Read a message CSV into a Corpus, collecting malformed rows as rejects.

    Reject reasons: wrong field count, duplicate messageId, bad threadIndex or
    timestamp, and rows that break a thread's contiguous 0..k indexing.
    """
    header, rows = _open_rows(path, MESSAGE_COLUMNS)
    index = {column: header.index(column) for column in MESSAGE_COLUMNS}

    rejects: list[RejectedRow] = []
    candidates: list[tuple[int, StaffMessage]] = []
    seen_ids: set[str] = set()

    for offset, row in enumerate(rows):
        row_number = offset + 2  # header is row 1
        if len(row) != len(header):
            rejects.append(RejectedRow(row_number, "wrong field count", tuple(row)))
            continue
        message_id = row[index["messageId"]].strip()
        encounter_id = row[index["encounterId"]].strip()
        if not message_id or not encounter_id:
            rejects.append(RejectedRow(row_number, "empty messageId or encounterId", tuple(row)))
            continue
        if message_id in seen_ids:
            rejects.append(RejectedRow(row_number, f"duplicate messageId {message_id}", tuple(row)))
            continue
        try:
            thread_index = int(row[index["threadIndex"]])
            if thread_index < 0:
                raise ValueError("negative")
        except ValueError:
            rejects.append(RejectedRow(row_number, "threadIndex is not a non-negative integer", tuple(row)))
            continue
        try:
            sent_at = parse_timestamp(row[index["sentAt"]])
        except ValueError:
            rejects.append(RejectedRow(row_number, "sentAt is not ISO-8601", tuple(row)))
            continue
        body = row[index["body"]]
        if redactor is not None:
            body = redactor.redact(body)
        seen_ids.add(message_id)
        candidates.append(
            (
                row_number,
                StaffMessage(
                    message_id=message_id,
                    encounter_id=encounter_id,
                    thread_index=thread_index,
                    sent_at=sent_at,
                    sender_id=row[index["senderId"]].strip(),
                    recipient_pool=row[index["recipientPool"]].strip(),
                    body=body,
                ),
            )
        )

    # Thread contiguity: within each encounter the sorted indexes must run
    # 0..k-1; rows that break the run are rejected, the rest kept.
    by_encounter: dict[str, list[tuple[int, StaffMessage]]] = {}
    for row_number, message in candidates:
        by_encounter.setdefault(message.encounter_id, []).append((row_number, message))

    accepted_ids: set[str] = set()
    for encounter_id, group in by_encounter.items():
        group_sorted = sorted(group, key=lambda pair: pair[1].thread_index)
        expected = 0
        for row_number, message in group_sorted:
            if message.thread_index == expected:
                accepted_ids.add(message.message_id)
                expected += 1
            else:
                rejects.append(
                    RejectedRow(
                        row_number,
                        f"threadIndex {message.thread_index} breaks contiguity in "
                        f"encounter {encounter_id} (expected {expected})",
                        (),
                    )
                )

    accepted = [m for _, m in candidates if m.message_id in accepted_ids]
    rejects.sort(key=lambda r: r.row_number)
    if rejects:
        logger.warning("ingest %s: %d rows rejected", path, len(rejects))
    return IngestResult(corpus=Corpus(accepted), rejects=rejects)


def write_messages(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(MESSAGE_COLUMNS)
        for m in corpus.messages:
            writer.writerow(
                [
                    m.message_id,
                    m.encounter_id,
                    m.thread_index,
                    format_timestamp(m.sent_at),
                    m.sender_id,
                    m.recipient_pool,
                    m.body,
                ]
            )


def write_rejects(rejects: Sequence[RejectedRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rowNumber", "reason"])
        for reject in rejects:
            writer.writerow([reject.row_number, reject.reason])


def _load_office_file(path: str | Path) -> list[tuple[str, str]]:
    _, rows = _open_rows(path, ("encounterId", "officeId"))
    pairs = []
    for row in rows:
        if len(row) >= 2 and row[0].strip():
            pairs.append((row[0].strip(), row[1].strip()))
    return pairs


def merge_office_mappings(path_a: str | Path, path_b: str | Path) -> OfficeMapping:
    """Union of both files; on conflict the first file wins and the loss is logged."""
    mapping = OfficeMapping()
    for encounter_id, office_id in _load_office_file(path_a):
        mapping.assignments[encounter_id] = office_id
    for encounter_id, office_id in _load_office_file(path_b):
        existing = mapping.assignments.get(encounter_id)
        if existing is None:
            mapping.assignments[encounter_id] = office_id
        elif existing != office_id:
            mapping.conflicts.append((encounter_id, existing, office_id))
            logger.warning(
                "office mapping conflict for encounter %s: keeping %s, dropping %s",
                encounter_id,
                existing,
                office_id,
            )
    return mapping


def load_directory(path: str | Path) -> dict[str, StaffDirectoryEntry]:
    header, rows = _open_rows(path, ("staffId", "displayName", "teamId", "active"))
    index = {c: header.index(c) for c in ("staffId", "displayName", "teamId", "active")}
    directory: dict[str, StaffDirectoryEntry] = {}
    for row in rows:
        staff_id = row[index["staffId"]].strip()
        if not staff_id:
            continue
        if staff_id in directory:
            raise CorpusError(f"duplicate staffId in directory: {staff_id!r}")
        directory[staff_id] = StaffDirectoryEntry(
            staff_id=staff_id,
            display_name=row[index["displayName"]],
            team_id=row[index["teamId"]].strip(),
            active=row[index["active"]].strip().lower() in ("true", "1", "yes"),
        )
    return directory


def load_calls(path: str | Path) -> list[CallRecord]:
    header, rows = _open_rows(path, ("callId", "agentId", "teamId", "receivedAt", "handled"))
    index = {c: header.index(c) for c in ("callId", "agentId", "teamId", "receivedAt", "handled")}
    calls: list[CallRecord] = []
    seen: set[str] = set()
    for row in rows:
        call_id = row[index["callId"]].strip()
        if not call_id:
            continue
        if call_id in seen:
            raise CorpusError(f"duplicate callId: {call_id!r}")
        seen.add(call_id)
        calls.append(
            CallRecord(
                call_id=call_id,
                agent_id=row[index["agentId"]].strip(),
                team_id=row[index["teamId"]].strip(),
                received_at=parse_timestamp(row[index["receivedAt"]]),
                handled=row[index["handled"]].strip().lower() in ("true", "1", "yes"),
            )
        )
    return calls


def load_gold(
    path: str | Path,
    taxonomy: Taxonomy | None = None,
    corpus: Corpus | None = None,
) -> dict[str, str]:
    """messageId -> leaf label; optionally validated against taxonomy/corpus."""
    header, rows = _open_rows(path, ("messageId", "label"))
    index = {c: header.index(c) for c in ("messageId", "label")}
    leaves = set(taxonomy.leaf_labels) if taxonomy is not None else None
    gold: dict[str, str] = {}
    for row in rows:
        message_id = row[index["messageId"]].strip()
        label = row[index["label"]].strip()
        if not message_id:
            continue
        if leaves is not None and label not in leaves:
            raise CorpusError(f"gold label {label!r} is not a taxonomy leaf")
        if corpus is not None and message_id not in corpus._by_id:
            raise CorpusError(f"gold messageId {message_id!r} not found in corpus")
        gold[message_id] = label
    return gold


def write_gold(gold: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["messageId", "label"])
        for message_id, label in gold.items():
            writer.writerow([message_id, label])


def write_directory(directory: Mapping[str, StaffDirectoryEntry], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["staffId", "displayName", "teamId", "active"])
        for entry in directory.values():
            writer.writerow(
                [entry.staff_id, entry.display_name, entry.team_id, str(entry.active).lower()]
            )


def write_calls(calls: Sequence[CallRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["callId", "agentId", "teamId", "receivedAt", "handled"])
        for call in calls:
            writer.writerow(
                [
                    call.call_id,
                    call.agent_id,
                    call.team_id,
                    format_timestamp(call.received_at),
                    str(call.handled).lower(),
                ]
            )


def write_office_file(assignments: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["encounterId", "officeId"])
        for encounter_id, office_id in assignments.items():
            writer.writerow([encounter_id, office_id])
