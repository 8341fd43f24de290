"""
Command-line entry point for the learning-driven zero-trust engine.

Subcommands: gen-data, learn, query, effect, decide, simulate.
Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from ztlearn.config import get_settings
from ztlearn.models import (
    ACTION, DeploymentMode, EffectMode, ModelValidationError, SchemaLookupError,
    TimestampPolicyKind, ZtError,
)
from ztlearn.schemas import (
    ILLUSTRATIVE_DOMAINS, AccessRequest, CliConfig, SearchConfig, SyntheticConfig, Thresholds, TimestampPolicy,
)
from ztlearn.services import continuum_sim, dataset, inference
from ztlearn.services.bayesnet import load_model, save_model
from ztlearn.services.decision import ConfigurationError, PolicyEnforcementPoint, write_decision_log
from ztlearn.services.policies import PolicyEngine, PolicyError, load_policy_set
from ztlearn.services.structure_learning import (
    MAX_EXHAUSTIVE_VARS, SearchConfigError, learn_network, write_trace,
)
from ztlearn.utils.jsonl import canonical_dumps, read_jsonl

logger = logging.getLogger(__name__)
settings = get_settings()

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# Errors caused by bad input or configuration rather than by the computation
USAGE_ERRORS = (
    ValidationError, dataset.DatasetError, SchemaLookupError, inference.EvidenceError,
    ConfigurationError, PolicyError, SearchConfigError, ModelValidationError,
    continuum_sim.SimulationError, FileNotFoundError, IsADirectoryError,
)


class UsageError(ZtError):
    """Malformed command-line value."""
    pass


def emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text)


def parse_evidence(text: Optional[str]) -> Dict[str, str]:
    """Parse "source_port=443,protocol=HTTPS" into a mapping."""
    evidence: Dict[str, str] = {}
    if not text:
        return evidence
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"evidence item '{item}' is not name=value")
        name, value = item.split("=", 1)
        evidence[name.strip()] = value.strip()
    return evidence


def read_domains(path: str) -> Dict[str, List[str]]:
    """Illustrative domains with the attributes named in a JSON file replaced."""
    try:
        overrides = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"domains file {path} is not valid JSON: {e}") from None
    if not isinstance(overrides, dict):
        raise UsageError(f"domains file {path} must hold an object of attribute -> values")
    domains = {k: list(v) for k, v in ILLUSTRATIVE_DOMAINS.items()}
    domains.update(overrides)
    return domains


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = CliConfig(subcommand="gen-data", output=args.output, seed=args.seed)
    synthetic = SyntheticConfig(
        rows=args.rows,
        fraud_fraction=args.fraud_fraction,
        fraud_strength=args.fraud_strength,
        **({"domains": read_domains(args.domains)} if args.domains else {}),
    )
    log, labels = dataset.generate_synthetic(config.seed, synthetic)
    out = Path(config.output)
    if out.suffix == ".jsonl":
        dataset.write_jsonl(log, out)
    else:
        dataset.write_csv(log, out)
    labels_path = Path(args.labels) if args.labels else out.with_suffix(".labels.csv")
    pd.DataFrame({"row": range(len(labels)), "label": [label.value for label in labels]}).to_csv(
        labels_path, index=False, lineterminator="\n"
    )
    logger.info(f"Wrote {len(labels)} labels to {labels_path}")
    return EXIT_OK


def _search_config(args: argparse.Namespace, config: CliConfig) -> SearchConfig:
    return SearchConfig(
        max_parents=config.max_parents, max_iterations=config.max_iterations,
        random_restarts=args.restarts, seed=config.seed, alpha=config.alpha,
        reserve_other=not args.no_reserve_other,
    )


def cmd_learn(args: argparse.Namespace) -> int:
    config = CliConfig(
        subcommand="learn", input=args.input, output=args.model, seed=args.seed,
        alpha=args.alpha, max_parents=args.max_parents, max_iterations=args.max_iterations,
    )
    policy = TimestampPolicy(kind=TimestampPolicyKind(args.timestamp_policy), edges=args.bucket_edges or [])
    raw = dataset.load_table(config.input) if args.generic else dataset.load_log(config.input)
    data = dataset.learning_view(raw, policy)
    method = "hill_climb"
    if args.max_vars_exhaustive is not None:
        if args.max_vars_exhaustive > MAX_EXHAUSTIVE_VARS:
            raise UsageError(f"--max-vars-exhaustive is limited to {MAX_EXHAUSTIVE_VARS}")
        if len(data.schema) <= args.max_vars_exhaustive:
            method = "exhaustive"
    net, report, trace = learn_network(data, _search_config(args, config), method)
    save_model(net, config.output)
    report_text = canonical_dumps(report.model_dump(mode="json"), indent=2) + "\n"
    if args.report:
        emit(report_text, args.report)
    else:
        sys.stdout.write(report_text)
    if args.trace:
        write_trace(trace, args.trace)
    return EXIT_OK


def query_document(net, target: str, evidence: Dict[str, str], method: str = "elimination") -> Dict:
    run = inference.enumerate_query if method == "enumeration" else inference.query
    distribution = run(net, target, evidence)
    categories = net.schema.variable(target).categories
    return {
        "target": target,
        "evidence": evidence,
        "distribution": {label: float(p) for label, p in zip(categories, distribution)},
        "model_version": net.version,
    }


def cmd_query(args: argparse.Namespace) -> int:
    net = load_model(args.model)
    doc = query_document(net, args.target, parse_evidence(args.evidence), args.method)
    emit(canonical_dumps(doc, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_effect(args: argparse.Namespace) -> int:
    config = CliConfig(subcommand="effect", input=args.model, output=args.output, output_format=args.format)
    net = load_model(config.input)
    mode = EffectMode(args.mode)
    if args.all:
        tables = inference.effect_summary(net, mode)
    elif args.attribute:
        tables = [inference.causal_effect(net, args.attribute, mode)]
    else:
        raise UsageError("effect needs --attribute or --all")
    if config.output_format == "csv":
        emit(inference.write_effect_csv(tables), config.output)
    else:
        emit(inference.effect_tables_to_json(tables), config.output)
    return EXIT_OK


def cmd_decide(args: argparse.Namespace) -> int:
    thresholds = Thresholds(
        theta_block=settings.theta_block if args.theta_block is None else args.theta_block,
        theta_auto=settings.theta_auto if args.theta_auto is None else args.theta_auto,
    )
    config = CliConfig(subcommand="decide", input=args.input, output=args.output, thresholds=thresholds)
    net = load_model(args.model)
    engine = PolicyEngine(load_policy_set(args.policies)) if args.policies else None
    pep = PolicyEnforcementPoint(args.node, net, config.thresholds, engine)
    requests = [AccessRequest(**record) for record in read_jsonl(config.input)]
    decisions = [pep.decide(request, pdp_reachable=not args.pdp_unreachable) for request in requests]
    if config.output:
        write_decision_log(decisions, config.output)
    else:
        for decision in decisions:
            sys.stdout.write(canonical_dumps(decision.to_log_record()) + "\n")
    logger.info(f"Decided {len(decisions)} requests")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.replay:
        metrics = continuum_sim.replay_metrics(args.replay)
        emit(continuum_sim.metrics_json(metrics), args.metrics)
        return EXIT_OK
    if args.scenario:
        scenario = continuum_sim.load_scenario(args.scenario)
    else:
        scenario = continuum_sim.default_scenario()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.mode:
        updates["mode"] = DeploymentMode(args.mode)
    config = scenario.config.model_copy(update=updates) if updates else scenario.config
    metrics, trace = continuum_sim.run_sim(scenario.topology, config)
    emit(continuum_sim.metrics_json(metrics), args.metrics)
    if args.trace:
        continuum_sim.write_trace(trace, args.trace)
    if args.plots:
        continuum_sim.write_plot_data(trace, args.plots, config.plot_bucket_ms)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ztlearn", description="Learning-driven zero-trust engine")
    parser.add_argument("--log-level", default=settings.log_level,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen-data", help="generate a seeded synthetic activity log")
    gen.add_argument("--seed", type=int, default=settings.default_seed)
    gen.add_argument("--rows", type=int, default=33)
    gen.add_argument("--domains", help="JSON object replacing the values of named attributes")
    gen.add_argument("--fraud-fraction", type=float, default=0.3)
    gen.add_argument("--fraud-strength", type=float, default=1.0)
    gen.add_argument("--output", "-o", required=True)
    gen.add_argument("--labels")
    gen.set_defaults(handler=cmd_gen_data)

    learn = sub.add_parser("learn", help="learn a Bayesian network from an activity log")
    learn.add_argument("--input", "-i", required=True)
    learn.add_argument("--model", "-m", required=True)
    learn.add_argument("--report")
    learn.add_argument("--trace")
    learn.add_argument("--seed", type=int, default=settings.default_seed)
    learn.add_argument("--alpha", type=float, default=settings.alpha)
    learn.add_argument("--max-parents", type=int, default=settings.max_parents)
    learn.add_argument("--max-iterations", type=int, default=settings.max_iterations)
    learn.add_argument("--restarts", type=int, default=settings.random_restarts)
    learn.add_argument("--max-vars-exhaustive", type=int)
    learn.add_argument("--no-reserve-other", action="store_true")
    learn.add_argument("--generic", action="store_true",
                       help="learn from any categorical CSV instead of an activity log")
    learn.add_argument("--timestamp-policy", default=settings.timestamp_policy,
                       choices=[k.value for k in TimestampPolicyKind])
    learn.add_argument("--bucket-edges", type=int, nargs="+")
    learn.set_defaults(handler=cmd_learn)

    query = sub.add_parser("query", help="posterior of a target given evidence")
    query.add_argument("--model", "-m", required=True)
    query.add_argument("--target", default=ACTION)
    query.add_argument("--evidence", default="")
    query.add_argument("--method", choices=["elimination", "enumeration"], default="elimination")
    query.add_argument("--output", "-o")
    query.set_defaults(handler=cmd_query)

    effect = sub.add_parser("effect", help="P(action=allowed) per attribute value")
    effect.add_argument("--model", "-m", required=True)
    effect.add_argument("--attribute")
    effect.add_argument("--all", action="store_true")
    effect.add_argument("--mode", choices=[m.value for m in EffectMode], default=EffectMode.CONDITIONAL.value)
    effect.add_argument("--format", choices=["json", "csv"], default="json")
    effect.add_argument("--output", "-o")
    effect.set_defaults(handler=cmd_effect)

    decide = sub.add_parser("decide", help="PEP decisions for a JSONL request batch")
    decide.add_argument("--model", "-m", required=True)
    decide.add_argument("--input", "-i", required=True)
    decide.add_argument("--output", "-o")
    decide.add_argument("--policies")
    decide.add_argument("--theta-block", type=float)
    decide.add_argument("--theta-auto", type=float)
    decide.add_argument("--pdp-unreachable", action="store_true")
    decide.add_argument("--node", default="pep-0")
    decide.set_defaults(handler=cmd_decide)

    simulate = sub.add_parser("simulate", help="run a continuum scenario")
    simulate.add_argument("--scenario")
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--mode", choices=[m.value for m in DeploymentMode])
    simulate.add_argument("--metrics")
    simulate.add_argument("--trace")
    simulate.add_argument("--plots")
    simulate.add_argument("--replay")
    simulate.set_defaults(handler=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except (UsageError,) + USAGE_ERRORS as e:
        logger.error(f"{args.subcommand}: {e}")
        return EXIT_USAGE
    except ZtError as e:
        logger.error(f"{args.subcommand}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
