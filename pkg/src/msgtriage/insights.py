"""Aggregation of classification outcomes into the decision-support read model.

The cube counts messages by (level-1 topic, leaf topic, team, office, time
bucket). Unclassified outcomes surface as an explicit "Other" slice rather
than disappearing, messages without an office mapping group under "Unmapped",
and time buckets use UTC calendar boundaries. The cube is immutable once
built; rebuilds swap the whole object.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cascade import ClassificationOutcome
from .corpus import CallRecord, Corpus, OfficeMapping, StaffDirectoryEntry
from .taxonomy import OTHER_LABEL, UNCLASSIFIED_LABEL, Taxonomy

logger = logging.getLogger(__name__)

GRANULARITIES = ("day", "week", "month")
UNMAPPED = "Unmapped"

CubeKey = tuple[str, str, str, str, str]  # (level1, leaf, team, office, bucket)


class InsightsError(ValueError):
    pass


def bucket_key(moment: datetime, granularity: str) -> str:
    """UTC calendar bucket: "2025-03-04", "2025-W10", or "2025-03"."""
    moment = moment.astimezone(timezone.utc)
    if granularity == "day":
        return moment.date().isoformat()
    if granularity == "week":
        year, week, _ = moment.isocalendar()
        return f"{year}-W{week:02d}"
    if granularity == "month":
        return f"{moment.year}-{moment.month:02d}"
    raise InsightsError(f"unknown granularity {granularity!r}")


def next_bucket(bucket: str, granularity: str) -> str:
    """Successor bucket key; used to emit gapless chart axes."""
    if granularity == "day":
        day = datetime.fromisoformat(bucket).replace(tzinfo=timezone.utc)
        return (day + timedelta(days=1)).date().isoformat()
    if granularity == "week":
        year, week = bucket.split("-W")
        monday = datetime.fromisocalendar(int(year), int(week), 1)
        return bucket_key(
            (monday + timedelta(days=7)).replace(tzinfo=timezone.utc), "week"
        )
    if granularity == "month":
        year, month = (int(part) for part in bucket.split("-"))
        if month == 12:
            return f"{year + 1}-01"
        return f"{year}-{month + 1:02d}"
    raise InsightsError(f"unknown granularity {granularity!r}")


@dataclass
class AggregateCube:
    granularity: str
    cells: dict[CubeKey, int]
    level1_order: tuple[str, ...]  # taxonomy roots + "Other"
    leaf_order: tuple[str, ...]  # taxonomy leaves + "Other"
    leaf_level1: dict[str, str]  # leaf label -> level-1 ancestor label
    known_teams: tuple[str, ...]
    known_offices: tuple[str, ...]
    built_at: datetime

    @property
    def total(self) -> int:
        return sum(self.cells.values())

    def buckets(self) -> list[str]:
        return sorted({key[4] for key in self.cells})


def build_cube(
    outcomes: Iterable[ClassificationOutcome],
    corpus: Corpus,
    taxonomy: Taxonomy,
    directory: Mapping[str, StaffDirectoryEntry],
    office_mapping: OfficeMapping,
    granularity: str = "month",
    *,
    built_at: datetime | None = None,
) -> AggregateCube:
    """Aggregate outcomes joined with corpus metadata into the cube.

    Team attribution goes through the staff directory and honors the
    active-staff restriction: senders that are inactive or unknown fall under
    "Unmapped", as do encounters without an office association.
    """
    if granularity not in GRANULARITIES:
        raise InsightsError(f"unknown granularity {granularity!r}")

    cells: dict[CubeKey, int] = {}
    observed_teams: set[str] = set()
    observed_offices: set[str] = set()
    for outcome in outcomes:
        message = corpus.message(outcome.message_id)
        entry = directory.get(message.sender_id)
        team = entry.team_id if entry is not None and entry.active else UNMAPPED
        office = office_mapping.office_for(message.encounter_id) or UNMAPPED
        if outcome.final_label == UNCLASSIFIED_LABEL:
            level1, leaf = OTHER_LABEL, OTHER_LABEL
        else:
            leaf = outcome.final_label
            level1 = taxonomy.level1_of(leaf)
        bucket = bucket_key(message.sent_at, granularity)
        key = (level1, leaf, team, office, bucket)
        cells[key] = cells.get(key, 0) + 1
        observed_teams.add(team)
        observed_offices.add(office)

    directory_teams = {e.team_id for e in directory.values() if e.active}
    mapping_offices = set(office_mapping.assignments.values())
    leaf_level1 = {leaf: taxonomy.level1_of(leaf) for leaf in taxonomy.leaf_labels}
    leaf_level1[OTHER_LABEL] = OTHER_LABEL
    return AggregateCube(
        granularity=granularity,
        cells=cells,
        level1_order=tuple(r.label for r in taxonomy.roots) + (OTHER_LABEL,),
        leaf_order=taxonomy.leaf_labels + (OTHER_LABEL,),
        leaf_level1=leaf_level1,
        known_teams=tuple(sorted(directory_teams | observed_teams | {UNMAPPED})),
        known_offices=tuple(sorted(mapping_offices | observed_offices | {UNMAPPED})),
        built_at=built_at or datetime.now(timezone.utc),
    )


def _validate_filters(
    cube: AggregateCube, team: str | None, office: str | None
) -> None:
    if team is not None and team not in cube.known_teams:
        raise InsightsError(f"unknown team {team!r}")
    if office is not None and office not in cube.known_offices:
        raise InsightsError(f"unknown office {office!r}")


def _bucket_bounds(
    cube: AggregateCube, date_from: str | None, date_to: str | None
) -> tuple[str | None, str | None]:
    # Date filters snap to the cube's bucket boundaries.
    low = high = None
    if date_from:
        low = bucket_key(
            datetime.fromisoformat(date_from).replace(tzinfo=timezone.utc),
            cube.granularity,
        )
    if date_to:
        high = bucket_key(
            datetime.fromisoformat(date_to).replace(tzinfo=timezone.utc),
            cube.granularity,
        )
    return low, high


def _matching_cells(
    cube: AggregateCube,
    team: str | None,
    office: str | None,
    date_from: str | None,
    date_to: str | None,
) -> Iterable[tuple[CubeKey, int]]:
    low, high = _bucket_bounds(cube, date_from, date_to)
    for key, count in cube.cells.items():
        _, _, cell_team, cell_office, bucket = key
        if team is not None and cell_team != team:
            continue
        if office is not None and cell_office != office:
            continue
        if low is not None and bucket < low:
            continue
        if high is not None and bucket > high:
            continue
        yield key, count


@dataclass
class Distribution:
    level: str  # "1" | "leaf"
    total: int
    counts: dict[str, int]  # keyed by every label at that level, zero-filled
    shares: dict[str, float]  # count/total; all zero when total == 0


def distribution(
    cube: AggregateCube,
    level: str = "1",
    *,
    team: str | None = None,
    office: str | None = None,
    date_from: str | None = None,
    date_to: str | None = None,
) -> Distribution:
    """Counts and shares per label at level 1 or at the most granular level."""
    level = str(level)
    if level not in ("1", "leaf"):
        raise InsightsError(f"level must be '1' or 'leaf', got {level!r}")
    _validate_filters(cube, team, office)

    order = cube.level1_order if level == "1" else cube.leaf_order
    counts = {label: 0 for label in order}
    for key, count in _matching_cells(cube, team, office, date_from, date_to):
        label = key[0] if level == "1" else key[1]
        counts[label] = counts.get(label, 0) + count
    total = sum(counts.values())
    shares = {
        label: (count / total if total else 0.0) for label, count in counts.items()
    }
    return Distribution(level=level, total=total, counts=counts, shares=shares)


@dataclass
class TrendSeries:
    level: str
    granularity: str
    buckets: list[str]  # ascending, gapless between first and last
    series: dict[str, list[int]]  # label -> count per bucket


def trend(
    cube: AggregateCube,
    level: str = "1",
    *,
    team: str | None = None,
    office: str | None = None,
    date_from: str | None = None,
    date_to: str | None = None,
) -> TrendSeries:
    """Per-bucket label counts; buckets in range with no data emit zeros."""
    level = str(level)
    if level not in ("1", "leaf"):
        raise InsightsError(f"level must be '1' or 'leaf', got {level!r}")
    _validate_filters(cube, team, office)

    order = cube.level1_order if level == "1" else cube.leaf_order
    per_bucket: dict[str, dict[str, int]] = {}
    for key, count in _matching_cells(cube, team, office, date_from, date_to):
        label = key[0] if level == "1" else key[1]
        bucket = key[4]
        per_bucket.setdefault(bucket, {})
        per_bucket[bucket][label] = per_bucket[bucket].get(label, 0) + count

    low, high = _bucket_bounds(cube, date_from, date_to)
    observed = sorted(per_bucket)
    if observed:
        start = low or observed[0]
        end = high or observed[-1]
    elif low and high:
        start, end = low, high
    else:
        return TrendSeries(level=level, granularity=cube.granularity, buckets=[], series={})

    buckets = [start]
    while buckets[-1] < end:
        buckets.append(next_bucket(buckets[-1], cube.granularity))
        if len(buckets) > 100_000:
            raise InsightsError("trend range too large")
    series = {
        label: [per_bucket.get(bucket, {}).get(label, 0) for bucket in buckets]
        for label in order
    }
    return TrendSeries(
        level=level, granularity=cube.granularity, buckets=buckets, series=series
    )


@dataclass
class OverviewMetrics:
    message_volume: int
    encounter_volume: int
    call_volume: int
    handled_call_volume: int
    conversion_rate: float | None  # None when the denominator is zero
    conversion_rate_per_team: dict[str, float | None]
    routing_distribution: dict[str, int]  # pool -> message count

    def as_dict(self) -> dict:
        return {
            "messageVolume": self.message_volume,
            "encounterVolume": self.encounter_volume,
            "callVolume": self.call_volume,
            "handledCallVolume": self.handled_call_volume,
            "conversionRate": self.conversion_rate,
            "conversionRatePerTeam": self.conversion_rate_per_team,
            "routingDistribution": self.routing_distribution,
        }


def overview(
    corpus: Corpus,
    calls: Sequence[CallRecord],
    directory: Mapping[str, StaffDirectoryEntry],
    *,
    denominator: str = "handled",
) -> OverviewMetrics:
    """Volumes, conversion, and routing.

    Conversion rate is encounters-with-messages over handled calls (the
    denominator is switchable to all calls); it may exceed 1 and is reported
    as-is. A zero denominator yields None rather than a division error.
    """
    if denominator not in ("handled", "all"):
        raise InsightsError(f"denominator must be 'handled' or 'all', got {denominator!r}")

    routing: dict[str, int] = {}
    for message in corpus.messages:
        routing[message.recipient_pool] = routing.get(message.recipient_pool, 0) + 1

    def _counts(records: Iterable[CallRecord]) -> int:
        return sum(1 for c in records if c.handled or denominator == "all")

    denom_total = _counts(calls)
    encounters = len(corpus.threads)

    encounters_per_team: dict[str, int] = {}
    for thread in corpus.threads.values():
        head = thread.messages[0]
        entry = directory.get(head.sender_id)
        team = entry.team_id if entry is not None and entry.active else UNMAPPED
        encounters_per_team[team] = encounters_per_team.get(team, 0) + 1

    denom_per_team: dict[str, int] = {}
    for call in calls:
        if call.handled or denominator == "all":
            denom_per_team[call.team_id] = denom_per_team.get(call.team_id, 0) + 1

    per_team: dict[str, float | None] = {}
    for team in sorted(set(encounters_per_team) | set(denom_per_team)):
        denom = denom_per_team.get(team, 0)
        per_team[team] = encounters_per_team.get(team, 0) / denom if denom else None

    return OverviewMetrics(
        message_volume=len(corpus.messages),
        encounter_volume=encounters,
        call_volume=len(calls),
        handled_call_volume=sum(1 for c in calls if c.handled),
        conversion_rate=encounters / denom_total if denom_total else None,
        conversion_rate_per_team=per_team,
        routing_distribution=dict(sorted(routing.items())),
    )


def save_cube(cube: AggregateCube, path: str | Path) -> None:
    payload = {
        "granularity": cube.granularity,
        "builtAt": cube.built_at.astimezone(timezone.utc).isoformat(),
        "level1Order": list(cube.level1_order),
        "leafOrder": list(cube.leaf_order),
        "leafLevel1": dict(cube.leaf_level1),
        "knownTeams": list(cube.known_teams),
        "knownOffices": list(cube.known_offices),
        "cells": [[*key, count] for key, count in sorted(cube.cells.items())],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_cube(path: str | Path) -> AggregateCube:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    cells = {(c[0], c[1], c[2], c[3], c[4]): int(c[5]) for c in data["cells"]}
    leaf_level1 = data.get("leafLevel1")
    if leaf_level1 is None:
        # Cube written before the mapping was persisted; recover what the
        # cells themselves witness.
        leaf_level1 = {leaf: level1 for (level1, leaf, _, _, _) in cells}
    return AggregateCube(
        granularity=data["granularity"],
        cells=cells,
        level1_order=tuple(data["level1Order"]),
        leaf_order=tuple(data["leafOrder"]),
        leaf_level1=dict(leaf_level1),
        known_teams=tuple(data["knownTeams"]),
        known_offices=tuple(data["knownOffices"]),
        built_at=datetime.fromisoformat(data["builtAt"]),
    )


def save_overview(metrics: OverviewMetrics, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(metrics.as_dict(), indent=2) + "\n", encoding="utf-8"
    )
