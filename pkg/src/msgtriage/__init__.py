"""Staged classification of patient-contact-center staff messages.

Pipeline: deterministic keyword triage, then single-message model
classification, then full-thread model classification; plus the evaluation
harness that benchmarks model backends and the aggregation layer behind the
operations dashboard.
"""
from .cascade import (
    CascadeResult,
    ClassificationOutcome,
    StageTally,
    classify_stage2,
    classify_stage3,
    load_outcomes,
    persist_outcomes,
    run_cascade,
    stage1_pass,
)
from .corpus import (
    CallRecord,
    Corpus,
    EncounterThread,
    IngestResult,
    OfficeMapping,
    Redactor,
    StaffDirectoryEntry,
    StaffMessage,
    ingest_messages,
    load_calls,
    load_directory,
    load_gold,
    merge_office_mappings,
)
from .evaluation import (
    ComparisonResult,
    ConfusionMatrix,
    EvalReport,
    accuracy,
    compare_models,
    confusion,
    evaluate_outcomes,
    macro_f1,
    per_class_f1,
    weighted_f1,
)
from .gateway import (
    CompletionResult,
    Gateway,
    GatewayError,
    GatewayTimeoutError,
    MockBackend,
    ModelSpec,
    NonRetryableError,
    RetryExhaustedError,
    load_registry,
)
from .insights import (
    AggregateCube,
    OverviewMetrics,
    build_cube,
    distribution,
    overview,
    trend,
)
from .keywords import CompiledMatcher, KeywordRule, classify_stage1, compile_rules, load_rules
from .prompts import PromptTemplate, load_prompts, parse_label, render_prompt
from .synth import synth_corpus, synth_reference
from .taxonomy import (
    OTHER_LABEL,
    UNCLASSIFIED_LABEL,
    StageLabelSets,
    Taxonomy,
    TaxonomyError,
    TopicNode,
    leaf_to_level1,
    load_default_taxonomy,
    load_taxonomy,
    save_taxonomy,
)

__version__ = "0.1.0"
