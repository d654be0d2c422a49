"""Scoring of cascade outputs against gold labels and model comparison.

Weighted F1 is the headline metric (support-weighted mean of per-class F1);
accuracy, macro F1, and the per-class table ride along. Unclassified is a
prediction outcome only: it can never earn a true positive, and predictions
outside the gold label space are folded into the same column (metrics are
identical either way since such predictions score no true positives).
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cascade import (
    CascadeResult,
    ClassificationOutcome,
    StageTally,
    run_cascade,
    stage1_pass,
)
from .corpus import Corpus
from .gateway import Gateway
from .keywords import CompiledMatcher
from .prompts import PromptTemplate
from .taxonomy import UNCLASSIFIED_LABEL, StageLabelSets

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """counts[i][j]: gold class i predicted as class j; last column is Unclassified."""

    labels: tuple[str, ...]
    counts: list[list[int]]

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.counts)

    def support(self, label: str) -> int:
        return sum(self.counts[self.labels.index(label)])


def confusion(
    outcomes: Iterable[ClassificationOutcome] | Mapping[str, str],
    gold: Mapping[str, str],
    label_order: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Build the matrix over the gold label set; non-gold messages are ignored."""
    if not gold:
        raise EvaluationError("gold set is empty")
    if isinstance(outcomes, Mapping):
        predicted = dict(outcomes)
    else:
        predicted = {o.message_id: o.final_label for o in outcomes}

    if label_order is None:
        labels: list[str] = []
        for label in gold.values():
            if label not in labels:
                labels.append(label)
    else:
        labels = list(label_order)
        for label in gold.values():
            if label not in labels:
                raise EvaluationError(f"gold label {label!r} missing from label_order")

    index = {label: i for i, label in enumerate(labels)}
    unclassified_col = len(labels)
    counts = [[0] * (len(labels) + 1) for _ in labels]
    for message_id, gold_label in gold.items():
        if message_id not in predicted:
            raise EvaluationError(f"gold messageId {message_id!r} has no outcome")
        prediction = predicted[message_id]
        col = index.get(prediction, unclassified_col)
        counts[index[gold_label]][col] += 1
    return ConfusionMatrix(labels=tuple(labels), counts=counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.n == 0:
        raise EvaluationError("empty confusion matrix")
    correct = sum(cm.counts[i][i] for i in range(len(cm.labels)))
    return correct / cm.n


def per_class_f1(cm: ConfusionMatrix) -> dict[str, float]:
    """F1 per gold class with the zero-denominator convention (0, not NaN)."""
    if cm.n == 0:
        raise EvaluationError("empty confusion matrix")
    scores: dict[str, float] = {}
    k = len(cm.labels)
    for i, label in enumerate(cm.labels):
        tp = cm.counts[i][i]
        fn = sum(cm.counts[i]) - tp
        fp = sum(cm.counts[r][i] for r in range(k)) - tp
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        scores[label] = (
            2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        )
    return scores


def weighted_f1(cm: ConfusionMatrix) -> float:
    if cm.n == 0:
        raise EvaluationError("empty confusion matrix")
    scores = per_class_f1(cm)
    return sum(cm.support(label) / cm.n * scores[label] for label in cm.labels)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean over classes with nonzero support; emitted for completeness."""
    scores = per_class_f1(cm)
    supported = [label for label in cm.labels if cm.support(label) > 0]
    if not supported:
        raise EvaluationError("no class has support")
    return sum(scores[label] for label in supported) / len(supported)


@dataclass
class EvalReport:
    model_name: str
    accuracy: float
    weighted_f1: float
    macro_f1: float
    per_class_f1: dict[str, float]
    per_class_support: dict[str, int]
    n_evaluated: int
    stage_tally: StageTally | None
    total_inference_time: float  # seconds, over the full corpus run
    per_stage_inference_time: dict[str, float]  # {"stage2": s, "stage3": s}
    gateway_errors: int = 0

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "accuracy": self.accuracy,
            "weightedF1": self.weighted_f1,
            "macroF1": self.macro_f1,
            "perClassF1": self.per_class_f1,
            "perClassSupport": self.per_class_support,
            "nEvaluated": self.n_evaluated,
            "stageTally": self.stage_tally.as_dict() if self.stage_tally else None,
            "totalInferenceTime": self.total_inference_time,
            "perStageInferenceTime": self.per_stage_inference_time,
            "gatewayErrors": self.gateway_errors,
        }


def evaluate_outcomes(
    outcomes: Sequence[ClassificationOutcome],
    gold: Mapping[str, str],
    *,
    model_name: str = "",
    tally: StageTally | None = None,
    label_order: Sequence[str] | None = None,
) -> EvalReport:
    """Score one cascade run. Inference time sums over ALL outcomes, gold or
    not, because model time was spent on the whole corpus."""
    cm = confusion(outcomes, gold, label_order)
    scores = per_class_f1(cm)
    stage2_time = sum(o.stage2_latency or 0.0 for o in outcomes)
    stage3_time = sum(o.stage3_latency or 0.0 for o in outcomes)
    return EvalReport(
        model_name=model_name,
        accuracy=accuracy(cm),
        weighted_f1=weighted_f1(cm),
        macro_f1=macro_f1(cm),
        per_class_f1=scores,
        per_class_support={label: cm.support(label) for label in cm.labels},
        n_evaluated=cm.n,
        stage_tally=tally,
        total_inference_time=stage2_time + stage3_time,
        per_stage_inference_time={"stage2": stage2_time, "stage3": stage3_time},
        gateway_errors=sum(1 for o in outcomes if o.error),
    )


@dataclass
class ComparisonResult:
    reports: list[EvalReport]  # sorted by weighted F1 descending
    heatmap_labels: tuple[str, ...]
    heatmap_models: tuple[str, ...]  # same order as reports
    heatmap_values: list[list[float]]  # rows = labels, columns = models
    failures: dict[str, str] = field(default_factory=dict)
    outcomes_by_model: dict[str, list[ClassificationOutcome]] = field(default_factory=dict)


def compare_models(
    corpus: Corpus,
    gold: Mapping[str, str],
    models: Sequence[str],
    matcher: CompiledMatcher,
    gateway: Gateway,
    p2: PromptTemplate,
    p3: PromptTemplate,
    stage_labels: StageLabelSets,
    *,
    workers: int = 1,
    label_order: Sequence[str] | None = None,
) -> ComparisonResult:
    """Run the cascade once per model and rank the reports.

    Stage 1 is deterministic and model-independent, so it is computed once
    and shared. A model whose run fails outright is recorded in failures and
    the comparison continues; nothing is dropped silently.
    """
    if not models:
        raise EvaluationError("no models selected")
    if not gold:
        raise EvaluationError("gold set is empty")
    shared_stage1 = stage1_pass(corpus, matcher)

    reports: list[EvalReport] = []
    failures: dict[str, str] = {}
    outcomes_by_model: dict[str, list[ClassificationOutcome]] = {}
    for model in models:
        try:
            result: CascadeResult = run_cascade(
                corpus,
                matcher,
                gateway,
                model,
                p2,
                p3,
                stage_labels,
                workers=workers,
                stage1_results=shared_stage1,
            )
            report = evaluate_outcomes(
                result.outcomes,
                gold,
                model_name=model,
                tally=result.tally,
                label_order=label_order,
            )
        except Exception as exc:  # per-model isolation, comparison continues
            logger.error("model %s failed: %s", model, exc)
            failures[model] = f"{type(exc).__name__}: {exc}"
            continue
        reports.append(report)
        outcomes_by_model[model] = result.outcomes

    reports.sort(key=lambda r: (-r.weighted_f1, r.model_name))
    if reports:
        labels = tuple(reports[0].per_class_f1.keys())
    else:
        labels = ()
    heatmap = [
        [report.per_class_f1.get(label, 0.0) for report in reports] for label in labels
    ]
    return ComparisonResult(
        reports=reports,
        heatmap_labels=labels,
        heatmap_models=tuple(r.model_name for r in reports),
        heatmap_values=heatmap,
        failures=failures,
        outcomes_by_model=outcomes_by_model,
    )


def write_reports(comparison: ComparisonResult, path: str | Path) -> None:
    payload = {
        "reports": [report.as_dict() for report in comparison.reports],
        "failures": comparison.failures,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")


def write_heatmap(comparison: ComparisonResult, path: str | Path) -> None:
    """label x model per-class F1 table for the UI and external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", *comparison.heatmap_models])
        for label, row in zip(comparison.heatmap_labels, comparison.heatmap_values):
            writer.writerow([label, *(f"{value:.6f}" for value in row)])


def format_ranking(comparison: ComparisonResult) -> str:
    lines = [f"{'model':<28} {'weightedF1':>10} {'accuracy':>9} {'inferTime':>10}"]
    for report in comparison.reports:
        lines.append(
            f"{report.model_name:<28} {report.weighted_f1:>10.3f} "
            f"{report.accuracy:>9.3f} {report.total_inference_time:>9.1f}s"
        )
    for model, error in comparison.failures.items():
        lines.append(f"{model:<28} FAILED: {error}")
    return "\n".join(lines)
