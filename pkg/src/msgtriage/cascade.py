"""Three-stage classification pipeline and its final combinator.

Stage 1 (keyword triage) sees every message; only its leftovers go to the
single-message model stage, and only that stage's leftovers go to the
full-thread model stage. Whatever survives all three is Unclassified. Stage
boundaries are barriers: stage k+1 starts after stage k has fully resolved,
and result order always matches corpus order regardless of worker count.

Classification reads per stage: stages 1 and 2 look at the thread's first
message (where the call reason is documented); stage 3 feeds the entire
thread for context.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import Corpus, EncounterThread, Redactor, StaffMessage
from .gateway import CompletionResult, Gateway, GatewayError
from .keywords import CompiledMatcher
from .prompts import PromptTemplate, parse_label, render_prompt
from .taxonomy import OTHER_LABEL, UNCLASSIFIED_LABEL, StageLabelSets

logger = logging.getLogger(__name__)

OUTCOME_COLUMNS = (
    "messageId",
    "finalLabel",
    "decidedAtStage",
    "modelName",
    "latencyMs",
    "stage2LatencyMs",
    "stage3LatencyMs",
    "rawModelText",
    "error",
)


class CascadeError(ValueError):
    """Invalid cascade configuration; per-message failures never raise."""


@dataclass(frozen=True)
class ClassificationOutcome:
    """Final label (or Unclassified) for one message, with provenance.

    latency is the total model time spent on the message across stages 2 and
    3; the per-stage values are kept so reports can break inference time down
    the way the stage-2 timing summaries do.
    """

    message_id: str
    final_label: str
    decided_at_stage: int | None  # 1 | 2 | 3 | None (None == Unclassified)
    model_name: str | None = None
    latency: float | None = None
    raw_model_text: str | None = None
    stage2_latency: float | None = None
    stage3_latency: float | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        if (self.decided_at_stage is None) != (self.final_label == UNCLASSIFIED_LABEL):
            raise CascadeError(
                f"outcome {self.message_id}: decidedAtStage {self.decided_at_stage} "
                f"inconsistent with finalLabel {self.final_label!r}"
            )
        if self.decided_at_stage == 1 and self.model_name is not None:
            raise CascadeError(
                f"outcome {self.message_id}: stage-1 outcomes carry no model name"
            )


@dataclass(frozen=True)
class StageTally:
    """|M|, and the classified/leftover split after each stage."""

    total: int
    stage1_classified: int
    stage1_other: int
    stage2_classified: int
    stage2_other: int
    stage3_classified: int
    stage3_other: int

    def check(self) -> None:
        if self.stage1_classified + self.stage1_other != self.total:
            raise CascadeError("stage-1 tally does not partition the corpus")
        if self.stage2_classified + self.stage2_other != self.stage1_other:
            raise CascadeError("stage-2 tally does not partition the stage-1 leftovers")
        if self.stage3_classified + self.stage3_other != self.stage2_other:
            raise CascadeError("stage-3 tally does not partition the stage-2 leftovers")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CascadeResult:
    outcomes: list[ClassificationOutcome]
    tally: StageTally


@dataclass(frozen=True)
class _ModelStageResult:
    label: str
    completion: CompletionResult | None
    error: str | None


def classify_stage2(
    message: StaffMessage,
    gateway: Gateway,
    model: str,
    p2: PromptTemplate,
    c2: Sequence[str],
    *,
    tag: str | None = None,
) -> _ModelStageResult:
    """Single-message model classification; gateway failures fold to Other."""
    system, user = render_prompt(p2, c2, message)
    try:
        completion = gateway.complete(model, system, user, tag=tag or "stage2")
    except GatewayError as exc:
        return _ModelStageResult(OTHER_LABEL, None, f"{type(exc).__name__}: {exc}")
    return _ModelStageResult(parse_label(completion.text, c2), completion, None)


def classify_stage3(
    thread: EncounterThread,
    gateway: Gateway,
    model: str,
    p3: PromptTemplate,
    c3: Sequence[str],
    *,
    tag: str | None = None,
) -> _ModelStageResult:
    """Full-thread model classification; gateway failures fold to Other."""
    system, user = render_prompt(p3, c3, thread)
    try:
        completion = gateway.complete(model, system, user, tag=tag or "stage3")
    except GatewayError as exc:
        return _ModelStageResult(OTHER_LABEL, None, f"{type(exc).__name__}: {exc}")
    return _ModelStageResult(parse_label(completion.text, c3), completion, None)


def stage1_pass(corpus: Corpus, matcher: CompiledMatcher) -> dict[str, str]:
    """messageId -> stage-1 label for the whole corpus.

    Deterministic and model-independent, so model comparisons compute it once
    and share it. Each thread's head is matched once and the result applies
    to every message of the thread.
    """
    head_labels: dict[str, str] = {}
    results: dict[str, str] = {}
    for message in corpus.messages:
        encounter_id = message.encounter_id
        if encounter_id not in head_labels:
            head = corpus.threads[encounter_id].messages[0]
            head_labels[encounter_id] = matcher.classify(head.body)
        results[message.message_id] = head_labels[encounter_id]
    return results


def _map_bounded(
    func: Callable, items: list, workers: int
) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def run_cascade(
    corpus: Corpus,
    matcher: CompiledMatcher,
    gateway: Gateway,
    model: str,
    p2: PromptTemplate,
    p3: PromptTemplate,
    stage_labels: StageLabelSets,
    *,
    workers: int = 1,
    stage1_results: Mapping[str, str] | None = None,
) -> CascadeResult:
    """Run the full three-stage pipeline over a corpus for one model.

    Per-message model failures become stage leftovers (with the diagnostic
    preserved on the outcome); only invalid configuration aborts the run.
    """
    gateway.spec(model)  # unknown model is a config error, not a per-message one
    c1 = set(stage_labels.c1)
    c2, c3 = stage_labels.c2, stage_labels.c3
    stage1 = dict(stage1_results) if stage1_results is not None else stage1_pass(corpus, matcher)

    outcomes: dict[str, ClassificationOutcome] = {}
    stage2_queue: list[StaffMessage] = []
    for message in corpus.messages:
        label = stage1.get(message.message_id, OTHER_LABEL)
        if label != OTHER_LABEL and label in c1:
            outcomes[message.message_id] = ClassificationOutcome(
                message_id=message.message_id, final_label=label, decided_at_stage=1
            )
        else:
            stage2_queue.append(message)
    stage1_classified = len(corpus.messages) - len(stage2_queue)

    def _run_stage2(message: StaffMessage) -> _ModelStageResult:
        head = corpus.threads[message.encounter_id].messages[0]
        return classify_stage2(
            head, gateway, model, p2, c2, tag=f"stage2:{message.message_id}"
        )

    stage2_results = _map_bounded(_run_stage2, stage2_queue, workers)

    stage3_queue: list[tuple[StaffMessage, _ModelStageResult]] = []
    stage2_classified = 0
    for message, result in zip(stage2_queue, stage2_results):
        if result.label != OTHER_LABEL:
            stage2_classified += 1
            outcomes[message.message_id] = ClassificationOutcome(
                message_id=message.message_id,
                final_label=result.label,
                decided_at_stage=2,
                model_name=model,
                latency=result.completion.latency if result.completion else None,
                raw_model_text=result.completion.text if result.completion else None,
                stage2_latency=result.completion.latency if result.completion else None,
                error=result.error,
            )
        else:
            stage3_queue.append((message, result))

    def _run_stage3(item: tuple[StaffMessage, _ModelStageResult]) -> _ModelStageResult:
        message, _ = item
        thread = corpus.threads[message.encounter_id]
        return classify_stage3(
            thread, gateway, model, p3, c3, tag=f"stage3:{message.message_id}"
        )

    stage3_results = _map_bounded(_run_stage3, stage3_queue, workers)

    stage3_classified = 0
    for (message, s2_result), s3_result in zip(stage3_queue, stage3_results):
        s2_latency = s2_result.completion.latency if s2_result.completion else None
        s3_latency = s3_result.completion.latency if s3_result.completion else None
        measured = [v for v in (s2_latency, s3_latency) if v is not None]
        total_latency = sum(measured) if measured else None
        error = s3_result.error or s2_result.error
        raw = (
            s3_result.completion.text
            if s3_result.completion is not None
            else (s2_result.completion.text if s2_result.completion is not None else None)
        )
        if s3_result.label != OTHER_LABEL:
            stage3_classified += 1
            outcomes[message.message_id] = ClassificationOutcome(
                message_id=message.message_id,
                final_label=s3_result.label,
                decided_at_stage=3,
                model_name=model,
                latency=total_latency,
                raw_model_text=raw,
                stage2_latency=s2_latency,
                stage3_latency=s3_latency,
                error=error,
            )
        else:
            outcomes[message.message_id] = ClassificationOutcome(
                message_id=message.message_id,
                final_label=UNCLASSIFIED_LABEL,
                decided_at_stage=None,
                model_name=model,
                latency=total_latency,
                raw_model_text=raw,
                stage2_latency=s2_latency,
                stage3_latency=s3_latency,
                error=error,
            )

    ordered = [outcomes[m.message_id] for m in corpus.messages]
    tally = StageTally(
        total=len(corpus.messages),
        stage1_classified=stage1_classified,
        stage1_other=len(stage2_queue),
        stage2_classified=stage2_classified,
        stage2_other=len(stage3_queue),
        stage3_classified=stage3_classified,
        stage3_other=len(stage3_queue) - stage3_classified,
    )
    tally.check()
    return CascadeResult(outcomes=ordered, tally=tally)


def _format_ms(value: float | None) -> str:
    return "" if value is None else f"{value * 1000:.3f}"


def _parse_ms(value: str) -> float | None:
    return None if value == "" else float(value) / 1000.0


def persist_outcomes(
    outcomes: Sequence[ClassificationOutcome],
    path: str | Path,
    redactor: Redactor | None = None,
) -> None:
    """Write the outcome table; raw model text passes the redaction hook."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(OUTCOME_COLUMNS)
        for o in outcomes:
            raw = o.raw_model_text or ""
            if redactor is not None and raw:
                raw = redactor.redact(raw)
            writer.writerow(
                [
                    o.message_id,
                    o.final_label,
                    "none" if o.decided_at_stage is None else str(o.decided_at_stage),
                    o.model_name or "",
                    _format_ms(o.latency),
                    _format_ms(o.stage2_latency),
                    _format_ms(o.stage3_latency),
                    raw,
                    o.error or "",
                ]
            )


def load_outcomes(path: str | Path) -> list[ClassificationOutcome]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in OUTCOME_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise CascadeError(f"outcome file {path} is missing columns: {missing}")
        outcomes = []
        for row in reader:
            stage = row["decidedAtStage"]
            outcomes.append(
                ClassificationOutcome(
                    message_id=row["messageId"],
                    final_label=row["finalLabel"],
                    decided_at_stage=None if stage == "none" else int(stage),
                    model_name=row["modelName"] or None,
                    latency=_parse_ms(row["latencyMs"]),
                    raw_model_text=row["rawModelText"] or None,
                    stage2_latency=_parse_ms(row["stage2LatencyMs"]),
                    stage3_latency=_parse_ms(row["stage3LatencyMs"]),
                    error=row["error"] or None,
                )
            )
    return outcomes


def write_tally(tally: StageTally, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tally.as_dict(), indent=2) + "\n", encoding="utf-8")


def load_tally(path: str | Path) -> StageTally:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return StageTally(**data)


def format_tally(tally: StageTally) -> str:
    return (
        f"messages={tally.total} | stage1 classified={tally.stage1_classified} "
        f"leftover={tally.stage1_other} | stage2 classified={tally.stage2_classified} "
        f"leftover={tally.stage2_other} | stage3 classified={tally.stage3_classified} "
        f"unclassified={tally.stage3_other}"
    )
