"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Everything here runs offline against the deterministic mock backend.
"""
from __future__ import annotations

import random
import re
import time
from dataclasses import dataclass

import pytest

from conftest import FakeClock, make_mock_spec
from msgtriage.cascade import run_cascade
from msgtriage.cli import main as cli_main
from msgtriage.corpus import OfficeMapping
from msgtriage.evaluation import (
    accuracy,
    compare_models,
    confusion,
    evaluate_outcomes,
    per_class_f1,
    weighted_f1,
)
from msgtriage.gateway import Gateway, MockBackend, _simulated_latency
from msgtriage.insights import build_cube, distribution, trend
from msgtriage.keywords import KeywordRule, compile_rules, load_rules, default_rules_path
from msgtriage.prompts import parse_label
from msgtriage.synth import synth_corpus, synth_reference
from msgtriage.taxonomy import OTHER_LABEL, UNCLASSIFIED_LABEL


def report(criterion: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {criterion}: {status} ({detail})"
    print(line, flush=True)
    import conftest

    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, f"{criterion}: {detail}"


@dataclass
class Trial:
    n: int
    tally: object
    stage_sets: dict
    stage2_calls: int
    stage3_calls: int
    stage1_ids_called: int


@pytest.fixture(scope="module")
def cascade_trials(taxonomy, stage_labels, prompts):
    """1,000 randomized corpora {size, rules, mock behavior}; shared by 1 & 2."""
    matcher_default = compile_rules(load_rules(default_rules_path()), stage_labels.c1)
    matcher_empty = compile_rules([], stage_labels.c1)
    rng = random.Random(20250810)
    trials: list[Trial] = []
    started = time.perf_counter()
    for _ in range(1000):
        n = rng.randint(1, 500)
        bundle = synth_corpus(rng.randint(0, 10**6), n, taxonomy)
        matcher = matcher_default if rng.random() < 0.5 else matcher_empty
        roll = rng.random()
        if roll < 0.3:
            mock = MockBackend.fixed(
                rng.choice(list(stage_labels.c2) + [OTHER_LABEL, "nonsense reply"])
            )
        elif roll < 0.65:
            answers = {
                m.message_id: (
                    bundle.gold[m.message_id] if rng.random() < 0.8 else OTHER_LABEL
                )
                for m in bundle.corpus.messages
            }
            mock = MockBackend.replay_map(
                answers, {m.message_id: m.body for m in bundle.corpus.messages}
            )
        else:
            mock = MockBackend(
                script=["fail"] * rng.randint(0, 3),
                fixed_text=rng.choice(list(stage_labels.c3)),
            )
        clock = FakeClock()
        gateway = Gateway(
            [make_mock_spec()],
            backends={"mock-model": mock},
            clock=clock.monotonic,
            sleeper=clock.sleep,
        )
        result = run_cascade(
            bundle.corpus, matcher, gateway, "mock-model",
            prompts["P2"], prompts["P3"], stage_labels,
        )
        stage_sets = {1: set(), 2: set(), 3: set(), None: set()}
        for outcome in result.outcomes:
            stage_sets[outcome.decided_at_stage].add(outcome.message_id)
        called_ids = {r.tag.split(":", 1)[1] for r in mock.requests if r.tag}
        # One logical classification request per (stage, message); retried
        # attempts share the request tag and count once.
        stage2_requests = {r.tag for r in mock.requests if r.tag.startswith("stage2")}
        stage3_requests = {r.tag for r in mock.requests if r.tag.startswith("stage3")}
        trials.append(
            Trial(
                n=n,
                tally=result.tally,
                stage_sets=stage_sets,
                stage2_calls=len(stage2_requests),
                stage3_calls=len(stage3_requests),
                stage1_ids_called=len(stage_sets[1] & called_ids),
            )
        )
    elapsed = time.perf_counter() - started
    return trials, elapsed


def test_criterion_1_cascade_partition_laws(cascade_trials):
    trials, elapsed = cascade_trials
    holds = 0
    for trial in trials:
        tally = trial.tally
        sets = trial.stage_sets
        union = sets[1] | sets[2] | sets[3] | sets[None]
        disjoint = sum(len(s) for s in sets.values()) == len(union)
        identities = (
            tally.stage1_classified + tally.stage1_other == tally.total == trial.n
            and tally.stage2_classified + tally.stage2_other == tally.stage1_other
            and tally.stage3_classified + tally.stage3_other == tally.stage2_other
            and len(union) == trial.n
        )
        if disjoint and identities:
            holds += 1
    report(
        "1 cascade-partition-laws",
        holds == len(trials) and elapsed < 30.0,
        f"{holds}/{len(trials)} trials hold, {elapsed:.1f}s < 30s",
    )


def test_criterion_2_call_count_law(cascade_trials):
    trials, _ = cascade_trials
    holds = sum(
        1
        for t in trials
        if t.stage2_calls == t.tally.stage1_other
        and t.stage3_calls == t.tally.stage2_other
        and t.stage1_ids_called == 0
    )
    report(
        "2 call-count-law",
        holds == len(trials),
        f"{holds}/{len(trials)} trials: stage-2 calls == |O1|, stage-3 calls == |O2|, "
        "no calls for stage-1 decisions",
    )


def brute_force_accuracy_wf1(gold_list, pred_list):
    n = len(gold_list)
    acc = sum(1 for g, p in zip(gold_list, pred_list) if g == p) / n
    wf1 = 0.0
    for cls in set(gold_list):
        tp = sum(1 for g, p in zip(gold_list, pred_list) if g == cls and p == cls)
        fp = sum(1 for g, p in zip(gold_list, pred_list) if g != cls and p == cls)
        fn = sum(1 for g, p in zip(gold_list, pred_list) if g == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        wf1 += sum(1 for g in gold_list if g == cls) / n * f1
    return acc, wf1


def test_criterion_3_metric_oracle_equivalence():
    rng = random.Random(31337)
    max_acc_err = 0.0
    max_wf1_err = 0.0
    for _ in range(1000):
        classes = [f"C{j}" for j in range(rng.randint(1, 12))]
        n = rng.randint(1, 200)
        gold_list = [rng.choice(classes) for _ in range(n)]
        pred_list = [
            rng.choice(classes + [UNCLASSIFIED_LABEL, "OffLabel"]) for _ in range(n)
        ]
        gold = {f"m{i}": g for i, g in enumerate(gold_list)}
        pred = {f"m{i}": p for i, p in enumerate(pred_list)}
        cm = confusion(pred, gold)
        oracle_acc, oracle_wf1 = brute_force_accuracy_wf1(gold_list, pred_list)
        max_acc_err = max(max_acc_err, abs(accuracy(cm) - oracle_acc))
        max_wf1_err = max(max_wf1_err, abs(weighted_f1(cm) - oracle_wf1))

    # Fixed 3-sample hand-derived example, exact.
    cm = confusion(
        {"m0": "A", "m1": "B", "m2": "B"}, {"m0": "A", "m1": "A", "m2": "B"}
    )
    scores = per_class_f1(cm)
    exact = (
        scores["A"] == 2 / 3 and scores["B"] == 2 / 3 and weighted_f1(cm) == 2 / 3
    )
    ok = max_acc_err <= 1e-9 and max_wf1_err <= 1e-9 and exact
    report(
        "3 metric-oracle-equivalence",
        ok,
        f"1000 random sets: max accuracy err {max_acc_err:.1e}, max wF1 err "
        f"{max_wf1_err:.1e}; hand example exact={exact}",
    )


def test_criterion_4_replay_oracle_end_to_end(taxonomy, stage_labels, prompts):
    bundle = synth_corpus(7, 500, taxonomy)
    matcher = compile_rules([], stage_labels.c1)

    clock = FakeClock()
    replay = MockBackend.replay_gold(bundle.corpus, bundle.gold)
    gateway = Gateway(
        [make_mock_spec("oracle"), make_mock_spec("pessimist")],
        backends={"oracle": replay, "pessimist": MockBackend.fixed(OTHER_LABEL)},
        clock=clock.monotonic,
        sleeper=clock.sleep,
    )
    res_oracle = run_cascade(
        bundle.corpus, matcher, gateway, "oracle", prompts["P2"], prompts["P3"], stage_labels
    )
    rep_oracle = evaluate_outcomes(res_oracle.outcomes, bundle.gold, tally=res_oracle.tally)
    res_other = run_cascade(
        bundle.corpus, matcher, gateway, "pessimist", prompts["P2"], prompts["P3"], stage_labels
    )
    rep_other = evaluate_outcomes(res_other.outcomes, bundle.gold, tally=res_other.tally)
    ok = (
        rep_oracle.accuracy == 1.0
        and rep_oracle.weighted_f1 == 1.0
        and rep_other.accuracy == 0.0
        and res_other.tally.stage3_other == 500
    )
    report(
        "4 replay-oracle-end-to-end",
        ok,
        f"replay: acc={rep_oracle.accuracy:.3f} wF1={rep_oracle.weighted_f1:.3f}; "
        f"all-Other: acc={rep_other.accuracy:.3f} |O3|={res_other.tally.stage3_other}",
    )


def test_criterion_5_parser_totality_fuzz():
    allowed = ["Billing Question", "Lab Results", "Insurance Inquiry", "Vaccine Request"]
    valid = set(allowed) | {OTHER_LABEL}
    rng = random.Random(555)
    crashes = 0
    bad = 0
    for i in range(10_000):
        length = rng.randint(0, 64)
        raw = bytes(rng.randrange(256) for _ in range(length)).decode("latin-1")
        if i % 3 == 0:  # mix in label-like noise around the junk
            raw = raw + rng.choice(allowed + ["other", "OTHER.", ""]) + raw[::-1]
        try:
            result = parse_label(raw, allowed)
        except Exception:
            crashes += 1
            continue
        if result not in valid:
            bad += 1
    report(
        "5 parser-totality-fuzz",
        crashes == 0 and bad == 0,
        f"10000 byte strings, {crashes} crashes, {bad} out-of-space results",
    )


def test_criterion_6_stage1_throughput(taxonomy, stage_labels):
    bundle = synth_corpus(7, 2000, taxonomy)
    rules = list(load_rules(default_rules_path()))
    rng = random.Random(6)
    filler_words = ["zenith", "quartz", "harbor", "violet", "lattice", "prism", "meadow"]
    priority = 100
    while len(rules) < 50:
        phrase = f"{rng.choice(filler_words)} {rng.choice(filler_words)} {priority}"
        rules.append(
            KeywordRule(rng.choice(list(stage_labels.c1)), (phrase,), priority)
        )
        priority += 1
    matcher = compile_rules(rules, stage_labels.c1)
    assert len(matcher.rules) == 50
    started = time.perf_counter()
    hits = sum(1 for m in bundle.corpus.messages if matcher.classify(m.body) != OTHER_LABEL)
    elapsed = time.perf_counter() - started
    report(
        "6 stage1-throughput",
        elapsed < 1.0,
        f"2000 messages through a 50-rule matcher in {elapsed*1000:.0f} ms "
        f"({hits} classified)",
    )


def test_criterion_7_aggregation_marginals(taxonomy, stage_labels, prompts):
    bundle = synth_corpus(42, 600, taxonomy)
    reference = synth_reference(42, bundle.corpus)
    mapping = OfficeMapping(assignments={**reference.offices_b, **reference.offices_a})
    clock = FakeClock()
    gateway = Gateway(
        [make_mock_spec()],
        backends={"mock-model": MockBackend.replay_gold(bundle.corpus, bundle.gold)},
        clock=clock.monotonic,
        sleeper=clock.sleep,
    )
    matcher = compile_rules(load_rules(default_rules_path()), stage_labels.c1)
    result = run_cascade(
        bundle.corpus, matcher, gateway, "mock-model",
        prompts["P2"], prompts["P3"], stage_labels,
    )
    cube = build_cube(
        result.outcomes, bundle.corpus, taxonomy, reference.directory, mapping, "month"
    )
    problems = []
    filter_cases = [
        {},
        {"team": "T-A"},
        {"office": "O-02"},
        {"team": "T-B", "office": "O-01"},
        {"date_from": "2025-02-01", "date_to": "2025-04-30"},
    ]
    for filters in filter_cases:
        for level in ("1", "leaf"):
            dist = distribution(cube, level, **filters)
            series = trend(cube, level, **filters)
            for label, count in dist.counts.items():
                if sum(series.series.get(label, [])) != count:
                    problems.append(f"trend!=distribution for {label} {filters}")
            if dist.total and abs(sum(dist.shares.values()) - 1.0) > 1e-9:
                problems.append(f"shares do not sum to 1 for {filters}")
        leaf_total = distribution(cube, "leaf", **filters).total
        level1_total = distribution(cube, "1", **filters).total
        if leaf_total != level1_total:
            problems.append(f"leaf total != level1 total for {filters}")
    if cube.total != len(result.outcomes):
        problems.append("cube total != outcome count")
    report(
        "7 aggregation-marginals",
        not problems,
        f"{len(filter_cases)} filter cases x 2 levels consistent; cube total "
        f"{cube.total} == outcomes {len(result.outcomes)}"
        + (f"; problems: {problems[:3]}" if problems else ""),
    )


def test_criterion_8_report_fidelity(taxonomy, stage_labels, prompts):
    bundle = synth_corpus(8, 250, taxonomy)
    rng = random.Random(88)
    noisy = {}
    for error_rate, name in ((0.1, "strong"), (0.45, "middling"), (0.85, "weak")):
        answers = {
            m.message_id: (
                bundle.gold[m.message_id] if rng.random() > error_rate else OTHER_LABEL
            )
            for m in bundle.corpus.messages
        }
        noisy[name] = MockBackend.replay_map(
            answers, {m.message_id: m.body for m in bundle.corpus.messages}
        )
    clock = FakeClock()
    gateway = Gateway(
        [make_mock_spec(name) for name in noisy],
        backends=noisy,
        clock=clock.monotonic,
        sleeper=clock.sleep,
    )
    matcher = compile_rules([], stage_labels.c1)
    comparison = compare_models(
        bundle.corpus, bundle.gold, list(noisy), matcher, gateway,
        prompts["P2"], prompts["P3"], stage_labels,
    )
    problems = []
    if len(comparison.reports) != 3:
        problems.append("expected 3 reports")
    for rep in comparison.reports:
        for field_name in ("accuracy", "weighted_f1", "per_class_f1", "stage_tally",
                           "total_inference_time"):
            if getattr(rep, field_name, None) is None:
                problems.append(f"{rep.model_name} missing {field_name}")
        if set(rep.per_class_f1) != set(rep.per_class_support):
            problems.append(f"{rep.model_name} per-class table incomplete")
        # Independent recomputation of per-call latencies from the request log.
        mock = noisy[rep.model_name]
        recomputed = sum(
            _simulated_latency(r.model, r.user, r.attempt, 80.0) for r in mock.requests
        )
        if recomputed == 0:
            problems.append(f"{rep.model_name} saw no model calls")
        elif abs(rep.total_inference_time - recomputed) / recomputed > 0.01:
            problems.append(
                f"{rep.model_name} latency total {rep.total_inference_time:.3f} vs "
                f"recomputed {recomputed:.3f}"
            )
    ranked = [r.weighted_f1 for r in comparison.reports]
    if ranked != sorted(ranked, reverse=True):
        problems.append("reports not sorted by weighted F1")
    if len(comparison.heatmap_values) != len(comparison.heatmap_labels):
        problems.append("heatmap rows != labels")
    report(
        "8 report-fidelity",
        not problems,
        "3 models report accuracy/wF1/per-class-F1/tally/inference-time; latency "
        "totals match request-log recomputation within 1%"
        + (f"; problems: {problems[:3]}" if problems else ""),
    )


def test_criterion_9_determinism(taxonomy, tmp_path):
    data = tmp_path / "data"
    assert cli_main(["synth", "--seed", "7", "--count", "300", "--out-dir", str(data)]) == 0
    blobs = {}
    for name, workers in (("a", 1), ("b", 1), ("c", 4)):
        out = tmp_path / name
        code = cli_main(
            [
                "classify",
                "--messages", str(data / "messages.csv"),
                "--model", "oracle",
                "--mock-replay-gold", str(data / "gold.csv"),
                "--workers", str(workers),
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        blobs[name] = (out / "outcomes.csv").read_bytes()
    ok = blobs["a"] == blobs["b"] == blobs["c"]
    report(
        "9 determinism",
        ok,
        f"outcome files identical across reruns and worker counts 1/4 "
        f"({len(blobs['a'])} bytes)",
    )
