"""Command-line surface for CI/CD use.

Exit codes: 0 success (for `promote`: a pass exists), 2 schema/validation
error, 3 I/O error; `promote` additionally exits 10 when the best outcome is
defer and 20 when every candidate fails. The default seed comes from --seed,
then the TVGOV_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from tvgov.audit import AuditConfig, run_audit
from tvgov.errors import TvgovError
from tvgov.evidence import (
    NoiseProfile,
    load_evidence,
    pair,
    run_command_evaluator,
    run_synthetic_evaluator,
    save_evidence,
    summarize,
)
from tvgov.gate import Decision, adjudicate, apply_multiplicity, rank_candidates
from tvgov.lifecycle import (
    GovernanceState,
    StateLog,
    diff_states,
    required_actions,
)
from tvgov.report import CandidateResult, PromotionReport, exit_code_for
from tvgov.space import (
    Assignment,
    CostCapRule,
    availability_rules_for,
    check_structural,
    feasible_set,
    load_cost_table,
)
from tvgov.stats import derived_seed
from tvgov.tvl.canonical import (
    canonical_json_bytes,
    doc_hash,
    policy_to_plain,
    sha256_hex,
)
from tvgov.tvl.model import EnvironmentSnapshot, TvlDocument, load_tvl

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_IO = 3
EXIT_DEFER = 10
EXIT_FAIL = 20


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("TVGOV_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise TvgovError(f"TVGOV_SEED must be an integer, got {env!r}") from None
    return 0


def _load_doc(path: str) -> TvlDocument:
    return load_tvl(Path(path))


def _load_environment(path: str) -> EnvironmentSnapshot:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return EnvironmentSnapshot.from_plain(raw, path)


def _read_state(path: str) -> GovernanceState:
    return GovernanceState.from_plain(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


# -- commands -------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    doc = _load_doc(args.path)
    print(
        f"OK: {doc.module_name}: {len(doc.tvars)} tuned variables, "
        f"{len(doc.structural_rules)} structural rule(s), "
        f"{len(doc.objectives)} objectives, "
        f"{len(doc.policy.chance_constraints)} chance constraint(s)"
    )
    return EXIT_OK


def cmd_space(args: argparse.Namespace) -> int:
    doc = _load_doc(args.path)
    environment = _load_environment(args.env) if args.env else None
    eligibility = list(availability_rules_for(doc)) if args.env else []
    if args.costs:
        costs = load_cost_table(args.costs)
        env = environment or doc.environment
        if not env.caps:
            raise TvgovError("cost table given but the environment declares no cap")
        if len(env.caps) > 1 and "budget_usd" not in env.caps:
            raise TvgovError(
                "ambiguous cost cap: environment declares multiple caps and "
                "none is named 'budget_usd'"
            )
        cap_name = "budget_usd" if "budget_usd" in env.caps else next(iter(env.caps))
        eligibility.append(CostCapRule(costs=costs, cap_name=cap_name))
    fs = feasible_set(
        doc, environment=environment, eligibility=eligibility, limit=args.limit
    )
    if args.list:
        for assignment in fs.assignments:
            print(assignment.assignment_id)
    else:
        print(len(fs))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    doc = _load_doc(args.path)
    if not doc.evaluation_set.resolved:
        raise TvgovError(
            f"no item manifest: expected "
            f"{doc.evaluation_set.dataset_id}.items next to the document "
            f"or an inline items list"
        )
    assignment = Assignment.from_id(doc, args.assignment)
    if not check_structural(assignment, doc.structural_rules):
        raise TvgovError(
            f"structurally invalid assignment: {assignment.assignment_id!r} "
            f"violates a structural rule"
        )
    seed = _default_seed(args.seed)
    measures = [o.measure for o in doc.objectives]
    tests = [c.test for c in doc.policy.chance_constraints]
    profile_raw = json.loads(Path(args.profile).read_text(encoding="utf-8"))
    if args.evaluator == "synthetic":
        profile = NoiseProfile.from_plain(profile_raw)
        matrix = run_synthetic_evaluator(
            assignment, doc.evaluation_set, profile, seed
        )
        matrix.validate_coverage(measures, tests)
    else:
        command = profile_raw.get("command") if isinstance(profile_raw, dict) else None
        if not isinstance(command, list) or not command:
            raise TvgovError(
                "command evaluator needs a profile JSON with a 'command' list"
            )
        matrix = run_command_evaluator(
            assignment,
            doc.evaluation_set,
            [str(part) for part in command],
            required_measures=measures,
            required_tests=tests,
        )
    save_evidence(matrix, args.out)
    print(f"wrote {len(matrix)} records to {args.out}")
    return EXIT_OK


def cmd_promote(args: argparse.Namespace) -> int:
    doc = _load_doc(args.path)
    seed = _default_seed(args.seed)
    batch_size = len(args.candidate)
    policy = doc.policy
    if args.bonferroni:
        policy = replace(policy, bonferroni=True)
    effective = apply_multiplicity(policy, batch_size)

    warnings: list[str] = []
    if not effective.bonferroni and batch_size > 1:
        warnings.append(
            f"batch of {batch_size} candidates adjudicated without "
            f"multiplicity control (bonferroni disabled); selection effects "
            f"are uncontrolled"
        )

    incumbent_bytes = Path(args.incumbent).read_bytes()
    incumbent_matrix = load_evidence(args.incumbent, doc.evaluation_set)
    incumbent_assignment = Assignment.from_id(doc, incumbent_matrix.assignment_id)
    if not check_structural(incumbent_assignment, doc.structural_rules):
        raise TvgovError(
            f"structurally invalid incumbent: {incumbent_matrix.assignment_id!r}"
        )

    entries = []
    results = []
    for path in args.candidate:
        candidate_bytes = Path(path).read_bytes()
        candidate_matrix = load_evidence(path, doc.evaluation_set)
        candidate_assignment = Assignment.from_id(
            doc, candidate_matrix.assignment_id
        )
        if not check_structural(candidate_assignment, doc.structural_rules):
            raise TvgovError(
                f"structurally invalid candidate: "
                f"{candidate_matrix.assignment_id!r}"
            )
        paired = pair(incumbent_matrix, candidate_matrix)
        warnings.extend(
            f"{candidate_matrix.assignment_id}: {w}" for w in paired.warnings
        )
        candidate_seed = derived_seed(
            seed, "candidate", candidate_matrix.assignment_id
        )
        decision = adjudicate(doc, paired, seed=candidate_seed, policy=effective)
        summary = summarize(candidate_matrix, doc)
        entries.append((candidate_assignment, decision, summary))
        results.append(
            CandidateResult(
                assignment_id=candidate_matrix.assignment_id,
                decision=decision,
                summary=summary,
                evidence_hash=sha256_hex(candidate_bytes),
                seed=candidate_seed,
            )
        )

    ranked = rank_candidates(entries, doc)
    ranking = tuple(entry[0].assignment_id for entry in ranked)
    head = ranked[0]
    recommendation = (
        head[0].assignment_id if head[1].decision is Decision.PASS else None
    )
    report = PromotionReport(
        tvl_hash=doc_hash(doc),
        incumbent_id=incumbent_matrix.assignment_id,
        incumbent_evidence_hash=sha256_hex(incumbent_bytes),
        batch_size=batch_size,
        alpha=policy.alpha,
        alpha_effective=effective.alpha,
        bonferroni_applied=effective.bonferroni and batch_size > 1,
        policy_echo=policy_to_plain(policy),
        candidates=tuple(results),
        ranking=ranking,
        recommendation=recommendation,
        seed=seed,
        warnings=tuple(warnings),
    )
    if args.report:
        Path(args.report).write_bytes(report.to_bytes())
    print(report.render_text())
    return exit_code_for([entry[1].decision for entry in entries])


def cmd_diff(args: argparse.Namespace) -> int:
    state_a = _read_state(args.state_a)
    state_b = _read_state(args.state_b)
    diff = diff_states(state_a, state_b)
    for line in diff.describe():
        print(line)
    fs = feasible_set(state_b.doc, eligibility=state_b.eligibility_rules)
    incumbent = None
    if state_b.incumbent_id is not None:
        # the incumbent may have fallen outside the new state's domains; it is
        # still an incumbent (feasibility is checked by id), so reconstruct it
        # under whichever state can parse it
        for doc in (state_b.doc, state_a.doc):
            try:
                incumbent = Assignment.from_id(doc, state_b.incumbent_id)
                break
            except TvgovError:
                continue
    actions = required_actions(
        diff,
        fs,
        incumbent,
        epoch_reached=args.epoch_reached,
        drift=args.drift,
    )
    if actions:
        print("actions:")
        for action in actions:
            print(f"  {action.kind.value}: {action.rationale}")
    else:
        print("no actions")
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    doc = _load_doc(args.path)
    config = AuditConfig.load(args.config)
    result = run_audit(doc, config)
    payload = canonical_json_bytes(result) + b"\n"
    if args.out:
        Path(args.out).write_bytes(payload)
    header = f"{'effect':>8}  {'pass':>6}  {'defer':>6}  {'fail':>6}  trials={config.trials}"
    print(header)
    for cell in result["cells"]:
        print(
            f"{cell['true_effect']:>8.4g}  {cell['pass_rate']:>6.3f}  "
            f"{cell['defer_rate']:>6.3f}  {cell['fail_rate']:>6.3f}"
        )
    return EXIT_OK


def cmd_log(args: argparse.Namespace) -> int:
    log = StateLog(args.dir)
    if args.log_command == "verify":
        issues = log.verify()
        if issues:
            for issue in issues:
                print(f"integrity violation: {issue}", file=sys.stderr)
            return EXIT_SCHEMA
        head = log.head()
        if head is None:
            print("log is empty")
        else:
            print(f"log OK: {head[0] + 1} state(s), head {head[1][:12]}...")
        return EXIT_OK
    if args.log_command == "head":
        head = log.head()
        if head is None:
            print("log is empty")
        else:
            print(f"version {head[0]} content_hash {head[1]}")
        return EXIT_OK
    # rollback
    version = log.rollback(args.to)
    print(f"rolled back to version {args.to} as new version {version}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvgov",
        description=(
            "Governed tuning engine: validate declarations, enumerate the "
            "feasible space, collect evidence, and adjudicate promotions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a TVL document")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("space", help="feasible-set size or listing")
    p.add_argument("path")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--count", action="store_true", help="print |F| (default)")
    mode.add_argument("--list", action="store_true", help="print assignment ids")
    p.add_argument("--env", help="environment snapshot JSON overriding the document")
    p.add_argument("--costs", help="predicted-cost table (assignment_id<TAB>cost)")
    p.add_argument(
        "--limit", type=int, default=10_000_000,
        help="exhaustive enumeration cap (default 10^7)",
    )
    p.set_defaults(func=cmd_space)

    p = sub.add_parser("evaluate", help="produce evidence for one assignment")
    p.add_argument("path")
    p.add_argument("--assignment", required=True, help="assignment id")
    p.add_argument(
        "--evaluator", choices=("synthetic", "command"), default="synthetic"
    )
    p.add_argument(
        "--profile", required=True,
        help="noise profile JSON (synthetic) or {'command': [...]} JSON (command)",
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output evidence JSONL path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("promote", help="adjudicate candidates vs the incumbent")
    p.add_argument("path")
    p.add_argument("--incumbent", required=True, help="incumbent evidence JSONL")
    p.add_argument(
        "--candidate", required=True, action="extend", nargs="+",
        help="candidate evidence JSONL (repeatable)",
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="write the JSON promotion report here")
    p.add_argument(
        "--bonferroni", action="store_true",
        help="force Bonferroni multiplicity control for this batch",
    )
    p.set_defaults(func=cmd_promote)

    p = sub.add_parser("diff", help="diff two governance states into actions")
    p.add_argument("state_a")
    p.add_argument("state_b")
    p.add_argument(
        "--epoch-reached", action="store_true",
        help="a scheduled review epoch has been reached",
    )
    p.add_argument(
        "--drift", action="store_true",
        help="operator-observed drift with no artifact edit",
    )
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("audit", help="gate operating-characteristics simulation")
    p.add_argument("path")
    p.add_argument("--config", required=True, help="audit configuration JSON")
    p.add_argument("--out", help="write the JSON audit report here")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("log", help="inspect or roll back the state log")
    log_sub = p.add_subparsers(dest="log_command", required=True)
    for name, help_text in (
        ("verify", "replay the hash chain from genesis"),
        ("head", "print the head version and hash"),
        ("rollback", "append a copy of an older version"),
    ):
        lp = log_sub.add_parser(name, help=help_text)
        lp.add_argument("--dir", required=True, help="state log directory")
        if name == "rollback":
            lp.add_argument("--to", type=int, required=True, help="version to restore")
        lp.set_defaults(func=cmd_log)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_IO
    except IsADirectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PermissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except TvgovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
