"""Deterministic synthetic staff-message corpus for offline testing.

Real encounter messages contain protected health information and cannot ship
with the artifact, so tests and demos run on generated corpora: message bodies
embed topic-indicative wording drawn from the taxonomy, a configurable
fraction is deliberately ambiguous (no indicative wording at all), and every
message gets a gold label. Identical seeds produce byte-identical output.

Every body ends with a unique case reference token ("case C-000123"), which
keeps bodies distinct (the replay mock backend resolves prompts by body) and
gives tests a handle for constructing keyword rules with exact hit counts.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Mapping

from .corpus import CallRecord, Corpus, StaffDirectoryEntry, StaffMessage, parse_timestamp
from .taxonomy import Taxonomy

_FIRST_NAMES = [
    "Alex", "Jordan", "Sam", "Morgan", "Riley", "Casey", "Avery", "Quinn",
    "Taylor", "Jamie", "Drew", "Reese",
]

_POOLS = [
    "Primary Care Pool",
    "Cardiology Pool",
    "Pediatrics Pool",
    "Nurse Triage Pool",
    "Scheduling Pool",
    "Billing Office Pool",
]

_TOPIC_TEMPLATES = [
    "Pt called regarding {phrase}. Please review and advise. ({ref})",
    "Patient {name} phoned about {phrase}; routed to {pool}. ({ref})",
    "Caller requests help with {phrase}. Callback requested before 5pm. ({ref})",
    "Spoke with patient, main concern is {phrase}. Documenting per protocol. ({ref})",
    "Message taken for the office: {phrase}. Patient prefers a call back. ({ref})",
]

# Ambiguous bodies deliberately avoid every topic phrase; they exercise the
# model stages and the Other path.
_AMBIGUOUS_TEMPLATES = [
    "Patient {name} called and asked to speak with someone about an earlier visit. ({ref})",
    "Caller had a follow-up question for the office, details on file. ({ref})",
    "Please call the patient back at the number on file when available. ({ref})",
    "Patient phoned again about the same matter as last week. ({ref})",
]

_FOLLOWUP_TEMPLATES = [
    "Office reply: chart reviewed, will follow up with the patient today. ({ref})",
    "Follow-up: left a voicemail for the patient, awaiting response. ({ref})",
    "Office notes the request has been forwarded to the care team. ({ref})",
]


@dataclass
class SynthCorpus:
    corpus: Corpus
    gold: dict[str, str]  # messageId -> leaf label, for every message


@dataclass
class SynthReference:
    """Reference data shaped like the operational feeds the insights layer joins."""

    directory: dict[str, StaffDirectoryEntry]
    offices_a: dict[str, str]  # encounterId -> officeId, first-precedence file
    offices_b: dict[str, str]
    calls: list[CallRecord]


def _indicative_phrase(label: str) -> str:
    # The leaf label itself, lowercased, is the canonical indicative phrase;
    # it is what the shipped default keyword rules look for.
    return label.lower()


def synth_corpus(
    seed: int,
    n: int,
    taxonomy: Taxonomy,
    *,
    ambiguous_fraction: float = 0.15,
    multi_message_fraction: float = 0.2,
    start: str = "2025-01-06T08:00:00Z",
    span_days: int = 175,
) -> SynthCorpus:
    """Generate n messages grouped into encounter threads, with gold labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    leaves = list(taxonomy.leaf_labels)
    if not leaves:
        raise ValueError("taxonomy has no leaves")
    senders = [f"S-{i:02d}" for i in range(1, 11)]
    start_at = parse_timestamp(start)

    messages: list[StaffMessage] = []
    gold: dict[str, str] = {}
    message_no = 0
    encounter_no = 0

    while message_no < n:
        encounter_no += 1
        encounter_id = f"E-{encounter_no:06d}"
        topic = rng.choice(leaves)
        sender = rng.choice(senders)
        pool = rng.choice(_POOLS)
        opened_at = start_at + timedelta(
            days=rng.uniform(0, span_days), minutes=rng.uniform(0, 600)
        )
        length = 1
        if rng.random() < multi_message_fraction:
            length = rng.randint(2, 4)
        length = min(length, n - message_no)

        for thread_index in range(length):
            message_no += 1
            message_id = f"M-{message_no:06d}"
            ref = f"case C-{message_no:06d}"
            name = rng.choice(_FIRST_NAMES)
            if thread_index == 0:
                if rng.random() < ambiguous_fraction:
                    template = rng.choice(_AMBIGUOUS_TEMPLATES)
                else:
                    template = rng.choice(_TOPIC_TEMPLATES)
            else:
                template = rng.choice(_FOLLOWUP_TEMPLATES)
            body = template.format(
                phrase=_indicative_phrase(topic), name=name, pool=pool, ref=ref
            )
            messages.append(
                StaffMessage(
                    message_id=message_id,
                    encounter_id=encounter_id,
                    thread_index=thread_index,
                    sent_at=opened_at + timedelta(minutes=25 * thread_index),
                    sender_id=sender,
                    recipient_pool=pool,
                    body=body,
                )
            )
            gold[message_id] = topic

    return SynthCorpus(corpus=Corpus(messages), gold=gold)


def synth_reference(seed: int, corpus: Corpus) -> SynthReference:
    """Directory, office mappings, and call records consistent with a corpus.

    Office assignments are split across two files with a small deliberate
    overlap (including a few conflicts) so the merge path gets exercised;
    call volume runs ~1.3x the encounter count with ~90% handled.
    """
    rng = random.Random(seed * 7919 + 13)
    teams = ["T-A", "T-B", "T-C"]
    offices = [f"O-{i:02d}" for i in range(1, 6)]

    sender_ids = sorted({m.sender_id for m in corpus.messages})
    directory: dict[str, StaffDirectoryEntry] = {}
    for i, staff_id in enumerate(sender_ids):
        directory[staff_id] = StaffDirectoryEntry(
            staff_id=staff_id,
            display_name=f"Navigator {staff_id[-2:]}",
            team_id=teams[i % len(teams)],
            active=True,
        )
    # Inactive staff exist in HR extracts; they author nothing here.
    for j in (97, 98):
        staff_id = f"S-{j}"
        directory[staff_id] = StaffDirectoryEntry(
            staff_id=staff_id,
            display_name=f"Navigator {j}",
            team_id=teams[j % len(teams)],
            active=False,
        )

    encounter_ids = sorted(corpus.threads.keys())
    offices_a: dict[str, str] = {}
    offices_b: dict[str, str] = {}
    for encounter_id in encounter_ids:
        office = rng.choice(offices)
        roll = rng.random()
        if roll < 0.55:
            offices_a[encounter_id] = office
        elif roll < 0.9:
            offices_b[encounter_id] = office
        else:
            # Present in both; a few disagree to produce logged conflicts.
            offices_a[encounter_id] = office
            offices_b[encounter_id] = office if rng.random() > 0.3 else rng.choice(offices)

    calls: list[CallRecord] = []
    call_no = 0
    for encounter_id in encounter_ids:
        thread = corpus.threads[encounter_id]
        head = thread.messages[0]
        team = directory[head.sender_id].team_id if head.sender_id in directory else teams[0]
        for _ in range(1 + (1 if rng.random() < 0.3 else 0)):
            call_no += 1
            calls.append(
                CallRecord(
                    call_id=f"K-{call_no:06d}",
                    agent_id=head.sender_id,
                    team_id=team,
                    received_at=head.sent_at - timedelta(minutes=rng.uniform(1, 20)),
                    handled=rng.random() < 0.9,
                )
            )
    return SynthReference(
        directory=directory, offices_a=offices_a, offices_b=offices_b, calls=calls
    )
