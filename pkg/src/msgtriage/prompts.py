"""Prompt rendering for the model stages and parsing of free-text answers.

Stage 2 renders a single message; stage 3 renders the whole encounter thread.
Both instruct the model to answer with exactly one listed label or the word
"Other", and parse_label maps whatever actually comes back into that space.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import EncounterThread, StaffMessage
from .taxonomy import OTHER_LABEL

_PLACEHOLDER = re.compile(r"\{(labels|message|thread|examples)\}")


class PromptError(ValueError):
    """Template/content mismatch or a malformed template document."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named template; P2 consumes {message}, P3 consumes {thread}."""

    id: str  # "P2" | "P3"
    system: str
    user: str
    examples: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        placeholders = set(_PLACEHOLDER.findall(self.user))
        if "labels" not in placeholders:
            raise PromptError(f"template {self.id}: user text must reference {{labels}}")
        if self.id == "P2" and "message" not in placeholders:
            raise PromptError("template P2: user text must reference {message}")
        if self.id == "P3" and "thread" not in placeholders:
            raise PromptError("template P3: user text must reference {thread}")


def load_prompts(path: str | Path) -> dict[str, PromptTemplate]:
    """Read {"P2": {"system", "user", "examples"?}, "P3": {...}} from JSON."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PromptError(f"cannot read prompt file {path}: {exc}") from exc
    templates: dict[str, PromptTemplate] = {}
    for template_id in ("P2", "P3"):
        if template_id not in data:
            raise PromptError(f"prompt file {path} is missing template {template_id}")
        entry = data[template_id]
        templates[template_id] = PromptTemplate(
            id=template_id,
            system=str(entry.get("system", "")),
            user=str(entry["user"]),
            examples=tuple(entry.get("examples", ())),
        )
    return templates


def default_prompts_path() -> Path:
    return Path(__file__).parent / "data" / "prompts.json"


def format_thread(thread: EncounterThread) -> str:
    """One "[index] sender->pool: body" line per message, in thread order."""
    return "\n".join(
        f"[{m.thread_index}] {m.sender_id}->{m.recipient_pool}: {m.body}"
        for m in thread.messages
    )


def render_prompt(
    template: PromptTemplate,
    labels: Sequence[str],
    content: StaffMessage | EncounterThread,
) -> tuple[str, str]:
    """Deterministic substitution; returns (system text, user text)."""
    if template.id == "P2" and not isinstance(content, StaffMessage):
        raise PromptError("template P2 renders a single message, got a thread")
    if template.id == "P3" and not isinstance(content, EncounterThread):
        raise PromptError("template P3 renders a full thread, got a message")

    labels_block = "\n".join(labels)
    examples_block = "\n\n".join(template.examples)
    user = template.user.replace("{labels}", labels_block)
    user = user.replace("{examples}", examples_block)
    if isinstance(content, StaffMessage):
        user = user.replace("{message}", content.body)
    else:
        user = user.replace("{thread}", format_thread(content))

    leftover = _PLACEHOLDER.search(user)
    if leftover is not None:
        raise PromptError(f"unreplaced placeholder {{{leftover.group(1)}}} after substitution")
    return template.system, user


_TRAILING_PUNCT = ".,;:!?"
_QUOTE_PAIRS = [('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"), ("`", "`")]
_WS = re.compile(r"\s+")


def _normalize(text: str) -> str:
    text = text.strip()
    changed = True
    while changed and text:
        changed = False
        for open_q, close_q in _QUOTE_PAIRS:
            if len(text) >= 2 and text.startswith(open_q) and text.endswith(close_q):
                text = text[1:-1].strip()
                changed = True
        stripped = text.rstrip(_TRAILING_PUNCT)
        if stripped != text:
            text = stripped.strip()
            changed = True
    return _WS.sub(" ", text).casefold()


def parse_label(raw: str, allowed: Sequence[str]) -> str:
    """Map arbitrary model text onto one allowed label or "Other". Total.

    Exact match after normalization wins; a bare "other" is the sentinel;
    otherwise a label that occurs exactly once as a whole phrase inside the
    text is accepted; anything else is "Other".
    """
    if not raw:
        return OTHER_LABEL
    normalized = _normalize(raw)
    if not normalized:
        return OTHER_LABEL

    by_normalized = {_normalize(label): label for label in allowed}
    if normalized in by_normalized:
        return by_normalized[normalized]
    if normalized == OTHER_LABEL.casefold():
        return OTHER_LABEL

    haystack = _WS.sub(" ", raw).casefold()
    found: list[str] = []
    for label in allowed:
        needle = _normalize(label)
        if not needle:
            continue
        if re.search(rf"(?<!\w){re.escape(needle)}(?!\w)", haystack):
            found.append(label)
    if len(found) == 1:
        return found[0]
    return OTHER_LABEL
