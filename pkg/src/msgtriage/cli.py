"""Operator entry point: synth, ingest, classify, evaluate, compare, aggregate, serve.

Each subcommand performs one top-level pipeline operation and leaves its
artifacts on disk, so a 90-minute classification run can be re-scored or
re-aggregated without touching a model endpoint again. A JSON config file can
provide per-subcommand defaults; explicit flags always win. Secrets come only
from environment variables named in the model registry.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import insights
from .api import ServiceConfig, create_app
from .cascade import (
    format_tally,
    load_outcomes,
    load_tally,
    persist_outcomes,
    run_cascade,
    write_tally,
)
from .corpus import (
    Redactor,
    ingest_messages,
    load_calls,
    load_directory,
    load_gold,
    merge_office_mappings,
    write_calls,
    write_directory,
    write_gold,
    write_messages,
    write_office_file,
    write_rejects,
)
from .evaluation import (
    compare_models,
    evaluate_outcomes,
    format_ranking,
    write_heatmap,
    write_report,
    write_reports,
)
from .gateway import Gateway, MockBackend, ModelSpec, load_registry, default_registry_path
from .keywords import compile_rules, default_rules_path, load_rules
from .prompts import default_prompts_path, load_prompts
from .synth import synth_corpus, synth_reference
from .taxonomy import StageLabelSets, default_taxonomy_path, load_taxonomy

logger = logging.getLogger(__name__)


class CliError(Exception):
    """Configuration problem reported before any work starts."""


def _ensure_out_dir(path: str) -> Path:
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [name for name in names if getattr(args, name, None) in (None, "")]
    if missing:
        raise CliError(
            "missing required option(s): " + ", ".join(f"--{n.replace('_', '-')}" for n in missing)
        )


def _load_taxonomy(args: argparse.Namespace):
    return load_taxonomy(args.taxonomy or default_taxonomy_path())


def _stage_labels(args: argparse.Namespace, taxonomy) -> StageLabelSets:
    leaves = taxonomy.leaf_labels

    def _parse(raw: str | None) -> tuple[str, ...]:
        if not raw:
            return leaves
        return tuple(part.strip() for part in raw.split(",") if part.strip())

    sets = StageLabelSets(
        c1=_parse(getattr(args, "c1", None)),
        c2=_parse(getattr(args, "c2", None)),
        c3=_parse(getattr(args, "c3", None)),
    )
    sets.validate(taxonomy)
    return sets


def _redactor(args: argparse.Namespace) -> Redactor | None:
    choice = getattr(args, "redaction", None)
    if choice in (None, "none"):
        return None
    if choice == "default":
        return Redactor.default()
    return Redactor.from_file(choice)


def _matcher(args: argparse.Namespace, stage_labels: StageLabelSets):
    rules_path = getattr(args, "rules", None)
    if rules_path == "none":
        rules = []
    else:
        rules = load_rules(rules_path or default_rules_path())
    return compile_rules(
        rules,
        stage_labels.c1,
        case_insensitive=not getattr(args, "case_sensitive", False),
        word_boundary=not getattr(args, "no_word_boundary", False),
    )


def _gateway(args: argparse.Namespace, corpus=None) -> Gateway:
    specs = load_registry(args.registry or default_registry_path())
    names = {spec.name for spec in specs}
    backends = {}

    model_names = []
    if getattr(args, "model", None):
        model_names = [args.model]
    elif getattr(args, "models", None):
        model_names = [m.strip() for m in args.models.split(",") if m.strip()]

    replay_gold_path = getattr(args, "mock_replay_gold", None)
    fixed_text = getattr(args, "mock_fixed", None)
    extra_specs = []
    for name in model_names:
        if name in names:
            continue  # registry entries keep their configured endpoint
        if not (replay_gold_path or fixed_text):
            raise CliError(f"model {name!r} is not in the registry")
        extra_specs.append(
            ModelSpec(
                name=name,
                family="Mock",
                size_class="nano",
                endpoint_url="mock://fixed",
                request_timeout=5.0,
            )
        )
        if replay_gold_path:
            if corpus is None:
                raise CliError("--mock-replay-gold requires a message corpus")
            gold = load_gold(replay_gold_path)
            backends[name] = MockBackend.replay_gold(corpus, gold)
        else:
            backends[name] = MockBackend.fixed(fixed_text)
    return Gateway(list(specs) + extra_specs, backends=backends)


def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "out_dir")
    taxonomy = _load_taxonomy(args)
    out_dir = _ensure_out_dir(args.out_dir)
    bundle = synth_corpus(
        args.seed,
        args.count,
        taxonomy,
        ambiguous_fraction=args.ambiguous_fraction,
        multi_message_fraction=args.multi_message_fraction,
    )
    reference = synth_reference(args.seed, bundle.corpus)
    write_messages(bundle.corpus, out_dir / "messages.csv")
    write_gold(bundle.gold, out_dir / "gold.csv")
    write_directory(reference.directory, out_dir / "directory.csv")
    write_office_file(reference.offices_a, out_dir / "offices_a.csv")
    write_office_file(reference.offices_b, out_dir / "offices_b.csv")
    write_calls(reference.calls, out_dir / "calls.csv")
    print(
        f"synth: {len(bundle.corpus.messages)} messages, "
        f"{len(bundle.corpus.threads)} encounters, gold for all -> {out_dir}"
    )
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    _require(args, "messages")
    result = ingest_messages(args.messages, _redactor(args))
    sidecar = Path(args.messages).with_suffix(".rejects.csv")
    write_rejects(result.rejects, sidecar)
    if args.out:
        write_messages(result.corpus, args.out)
    print(
        f"ingest: accepted {len(result.corpus.messages)} messages in "
        f"{len(result.corpus.threads)} threads, rejected {len(result.rejects)} "
        f"(reject list: {sidecar})"
    )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    _require(args, "messages", "model", "out_dir")
    taxonomy = _load_taxonomy(args)
    stage_labels = _stage_labels(args, taxonomy)
    matcher = _matcher(args, stage_labels)
    prompts = load_prompts(args.prompts or default_prompts_path())
    redactor = _redactor(args)
    corpus = ingest_messages(args.messages, redactor).corpus
    gateway = _gateway(args, corpus)
    out_dir = _ensure_out_dir(args.out_dir)

    result = run_cascade(
        corpus,
        matcher,
        gateway,
        args.model,
        prompts["P2"],
        prompts["P3"],
        stage_labels,
        workers=args.workers,
    )
    persist_outcomes(result.outcomes, out_dir / "outcomes.csv", redactor)
    write_tally(result.tally, out_dir / "tally.json")
    print(format_tally(result.tally))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, "outcomes", "gold", "out_dir")
    outcomes = load_outcomes(args.outcomes)
    gold = load_gold(args.gold)
    tally_path = Path(args.outcomes).parent / "tally.json"
    tally = load_tally(tally_path) if tally_path.exists() else None
    model_name = next((o.model_name for o in outcomes if o.model_name), "")
    report = evaluate_outcomes(outcomes, gold, model_name=model_name, tally=tally)
    out_dir = _ensure_out_dir(args.out_dir)
    write_report(report, out_dir / "report.json")
    Path(out_dir / "reports.json").write_text(
        json.dumps({"reports": [report.as_dict()], "failures": {}}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"evaluated {report.n_evaluated} gold messages: "
        f"accuracy {report.accuracy:.3f}, weighted F1 {report.weighted_f1:.3f}"
    )
    # Class support is printed so gold-set skew is visible, not hidden.
    supports = ", ".join(f"{k}={v}" for k, v in report.per_class_support.items())
    print(f"gold class support: {supports}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    _require(args, "messages", "gold", "models", "out_dir")
    taxonomy = _load_taxonomy(args)
    stage_labels = _stage_labels(args, taxonomy)
    matcher = _matcher(args, stage_labels)
    prompts = load_prompts(args.prompts or default_prompts_path())
    redactor = _redactor(args)
    corpus = ingest_messages(args.messages, redactor).corpus
    gateway = _gateway(args, corpus)
    gold = load_gold(args.gold, taxonomy, corpus)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    out_dir = _ensure_out_dir(args.out_dir)

    comparison = compare_models(
        corpus,
        gold,
        models,
        matcher,
        gateway,
        prompts["P2"],
        prompts["P3"],
        stage_labels,
        workers=args.workers,
    )
    write_reports(comparison, out_dir / "reports.json")
    write_heatmap(comparison, out_dir / "heatmap.csv")
    for model, outcomes in comparison.outcomes_by_model.items():
        persist_outcomes(outcomes, out_dir / f"outcomes_{model}.csv", redactor)
    ranking = format_ranking(comparison)
    (out_dir / "summary.txt").write_text(ranking + "\n", encoding="utf-8")
    print(ranking)
    return 1 if comparison.failures else 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    _require(args, "outcomes", "messages", "directory", "offices_a", "offices_b", "calls", "out_dir")
    taxonomy = _load_taxonomy(args)
    outcomes = load_outcomes(args.outcomes)
    corpus = ingest_messages(args.messages, _redactor(args)).corpus
    directory = load_directory(args.directory)
    mapping = merge_office_mappings(args.offices_a, args.offices_b)
    calls = load_calls(args.calls)
    out_dir = _ensure_out_dir(args.out_dir)

    # Build timestamp derives from the data so re-runs produce identical bytes.
    built_at = max(m.sent_at for m in corpus.messages)
    cube = insights.build_cube(
        outcomes, corpus, taxonomy, directory, mapping, args.granularity, built_at=built_at
    )
    insights.save_cube(cube, out_dir / "cube.json")
    metrics = insights.overview(corpus, calls, directory, denominator=args.denominator)
    insights.save_overview(metrics, out_dir / "overview.json")
    print(
        f"aggregate: cube total {cube.total} over {len(cube.cells)} cells "
        f"({args.granularity} buckets); overview written"
    )
    if mapping.conflicts:
        print(f"office mapping conflicts (first file kept): {len(mapping.conflicts)}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    _require(args, "artifacts")
    import uvicorn

    config = ServiceConfig(
        artifacts_dir=Path(args.artifacts),
        token=args.token,
        expose_bodies=args.expose_bodies,
        static_dir=Path(args.static) if args.static else None,
        corpus_path=Path(args.messages) if args.messages else None,
        taxonomy_path=Path(args.taxonomy) if args.taxonomy else default_taxonomy_path(),
        rules_path=Path(args.rules) if args.rules and args.rules != "none" else default_rules_path(),
        prompts_path=Path(args.prompts) if args.prompts else default_prompts_path(),
        registry_path=Path(args.registry) if args.registry else default_registry_path(),
        redaction_path=Path(args.redaction) if args.redaction not in (None, "none", "default") else None,
    )
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _add_common_classify_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--taxonomy", help="taxonomy JSON (default: shipped)")
    parser.add_argument("--rules", help="keyword rules JSON, or 'none' (default: shipped)")
    parser.add_argument(
        "--case-sensitive", action="store_true", help="match keyword phrases case-sensitively"
    )
    parser.add_argument(
        "--no-word-boundary", action="store_true", help="allow keyword hits inside words"
    )
    parser.add_argument("--prompts", help="prompt templates JSON (default: shipped)")
    parser.add_argument("--registry", help="model registry JSON (default: shipped)")
    parser.add_argument("--redaction", help="redaction patterns JSON, 'default', or 'none'")
    parser.add_argument("--workers", type=int, default=1, help="parallel model calls")
    parser.add_argument("--c1", help="comma-separated stage-1 label subset")
    parser.add_argument("--c2", help="comma-separated stage-2 label subset")
    parser.add_argument("--c3", help="comma-separated stage-3 label subset")
    parser.add_argument(
        "--mock-replay-gold",
        help="gold CSV; selected model(s) answer with each message's gold label (offline oracle)",
    )
    parser.add_argument(
        "--mock-fixed", help="selected model(s) answer with this fixed text (offline)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msgtriage",
        description="Staged keyword/LLM classification of staff messages with "
        "model benchmarking and operational insights.",
    )
    parser.add_argument("--config", help="JSON file with per-subcommand option defaults")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus + reference files")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--taxonomy")
    p.add_argument("--ambiguous-fraction", type=float, default=0.15)
    p.add_argument("--multi-message-fraction", type=float, default=0.2)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a message file; write reject sidecar")
    p.add_argument("--messages")
    p.add_argument("--redaction")
    p.add_argument("--out", help="write the accepted rows as a normalized CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("classify", help="run the 3-stage cascade for one model")
    p.add_argument("--messages")
    p.add_argument("--model")
    p.add_argument("--out-dir")
    _add_common_classify_options(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score an outcome file against gold labels")
    p.add_argument("--outcomes")
    p.add_argument("--gold")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="run the cascade per model and rank by weighted F1")
    p.add_argument("--messages")
    p.add_argument("--gold")
    p.add_argument("--models", help="comma-separated registry model names")
    p.add_argument("--out-dir")
    _add_common_classify_options(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("aggregate", help="build the topic/team/office/time cube + overview")
    p.add_argument("--outcomes")
    p.add_argument("--messages")
    p.add_argument("--directory")
    p.add_argument("--offices-a")
    p.add_argument("--offices-b")
    p.add_argument("--calls")
    p.add_argument("--taxonomy")
    p.add_argument("--redaction")
    p.add_argument("--granularity", choices=("day", "week", "month"), default="month")
    p.add_argument(
        "--denominator",
        choices=("handled", "all"),
        default="handled",
        help="conversion-rate denominator (see README: the metric definition is local)",
    )
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("serve", help="serve the HTTP API (and optionally the dashboard)")
    p.add_argument("--artifacts")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", help="require this static API token")
    p.add_argument("--static", help="directory with the built dashboard bundle")
    p.add_argument("--expose-bodies", action="store_true")
    p.add_argument("--messages", help="corpus CSV enabling POST /runs and /messages")
    p.add_argument("--taxonomy")
    p.add_argument("--rules")
    p.add_argument("--prompts")
    p.add_argument("--registry")
    p.add_argument("--redaction")
    p.set_defaults(func=cmd_serve)

    return parser


def _apply_config_defaults(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not args.config:
        return
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {args.config}: {exc}") from exc
    defaults = {}
    defaults.update(config.get("common", {}))
    defaults.update(config.get(args.command, {}))
    for key, value in defaults.items():
        dest = key.replace("-", "_")
        if getattr(args, dest, None) in (None, False):
            setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        _apply_config_defaults(args, parser)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
