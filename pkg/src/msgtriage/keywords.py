"""Stage 1: deterministic keyword/key-phrase triage.

A compiled matcher runs one pass over a message body and returns the label of
the strongest (lowest priority number) rule with at least one hit, or the
"Other" sentinel. Matching is case-insensitive, whitespace-normalized, and
word-boundary anchored by default; overlapping phrase hits are permitted.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import StaffMessage
from .taxonomy import OTHER_LABEL

_WORD_CHAR = re.compile(r"\w")


class RuleError(ValueError):
    """A keyword rule file or rule set violates its invariants."""


@dataclass(frozen=True)
class KeywordRule:
    label: str
    phrases: tuple[str, ...]
    priority: int  # lower number wins when several rules match


def load_rules(path: str | Path) -> list[KeywordRule]:
    """Read a JSON rule file: [{"label", "phrases", "priority"}, ...]."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuleError(f"cannot read rule file {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise RuleError(f"rule file {path} must contain a JSON list")
    rules = []
    for i, entry in enumerate(entries):
        try:
            rules.append(
                KeywordRule(
                    label=str(entry["label"]),
                    phrases=tuple(str(p) for p in entry["phrases"]),
                    priority=int(entry["priority"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RuleError(f"rule entry {i} in {path} is malformed: {exc}") from exc
    return rules


def _phrase_pattern(phrase: str, word_boundary: bool) -> str:
    tokens = phrase.split()
    joined = r"\s+".join(re.escape(token) for token in tokens)
    if word_boundary:
        # Anchor only against word characters; a phrase starting or ending in
        # punctuation gets no boundary on that side (\b would invert there).
        if _WORD_CHAR.match(tokens[0][0]):
            joined = r"\b" + joined
        if _WORD_CHAR.match(tokens[-1][-1]):
            joined = joined + r"\b"
    return joined


class CompiledMatcher:
    """Immutable multi-phrase matcher; behavior depends only on the rule set.

    All phrases compile into a single scan: a zero-width lookahead alternation
    reports, at every position, the strongest rule matching there (groups are
    ordered by priority), so overlapping hits cannot shadow a stronger rule.
    """

    def __init__(
        self,
        rules: Sequence[KeywordRule],
        *,
        case_insensitive: bool = True,
        word_boundary: bool = True,
    ):
        self.rules: tuple[KeywordRule, ...] = tuple(
            sorted(rules, key=lambda r: r.priority)
        )
        self.case_insensitive = case_insensitive
        self.word_boundary = word_boundary

        alternatives = []
        self._group_to_rule: dict[str, KeywordRule] = {}
        for i, rule in enumerate(self.rules):
            group = f"r{i}"
            body = "|".join(
                _phrase_pattern(phrase, word_boundary) for phrase in rule.phrases
            )
            alternatives.append(f"(?P<{group}>{body})")
            self._group_to_rule[group] = rule
        flags = re.IGNORECASE if case_insensitive else 0
        self._scan = re.compile(r"(?=(?:" + "|".join(alternatives) + r"))", flags)
        self._min_priority = self.rules[0].priority if self.rules else None

    def classify(self, text: str) -> str:
        """Label of the strongest matching rule, or "Other" when none match."""
        if not self.rules or not text:
            return OTHER_LABEL
        best: KeywordRule | None = None
        for match in self._scan.finditer(text):
            rule = self._group_to_rule[match.lastgroup]  # type: ignore[index]
            if best is None or rule.priority < best.priority:
                best = rule
                if best.priority == self._min_priority:
                    break
        return best.label if best is not None else OTHER_LABEL


def compile_rules(
    rules: Iterable[KeywordRule],
    stage_labels: Sequence[str],
    *,
    case_insensitive: bool = True,
    word_boundary: bool = True,
) -> CompiledMatcher:
    """Validate rules against the stage-1 label set and build the matcher."""
    rules = list(rules)
    allowed = set(stage_labels)
    priorities: set[int] = set()
    cleaned: list[KeywordRule] = []
    for rule in rules:
        if rule.label not in allowed:
            raise RuleError(f"rule label {rule.label!r} is not a stage-1 label")
        if rule.priority in priorities:
            raise RuleError(f"duplicate rule priority: {rule.priority}")
        priorities.add(rule.priority)
        phrases = tuple(p.strip() for p in rule.phrases)
        if not phrases or any(not p for p in phrases):
            raise RuleError(f"rule {rule.label!r} has an empty phrase")
        cleaned.append(KeywordRule(label=rule.label, phrases=phrases, priority=rule.priority))
    return CompiledMatcher(
        cleaned, case_insensitive=case_insensitive, word_boundary=word_boundary
    )


def classify_stage1(message: StaffMessage | str, matcher: CompiledMatcher) -> str:
    """Pure stage-1 classification of a message body."""
    body = message if isinstance(message, str) else message.body
    return matcher.classify(body)


def default_rules_path() -> Path:
    return Path(__file__).parent / "data" / "rules.json"
