"""Command-line entry point: ``autofill-sim {run,attack,matrix}``.

Exit status is 0 when everything matches its golden and no attack steals
from the secure model, 1 on a conformance difference, 2 on usage or
fixture errors.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from autofill_sim import __version__
from autofill_sim.attacks import AttackKind, OutcomeKind, build_scenario, classify
from autofill_sim.errors import AutofillSimError
from autofill_sim.frameworks import PolicyId, preset, run_ceremony
from autofill_sim.harness import (
    Suite,
    captured_values,
    compare_golden,
    render_matrix,
    render_report,
    run_matrix,
    run_suite,
)
from autofill_sim.model import UserAgent

EXIT_OK, EXIT_DIFF, EXIT_USAGE = 0, 1, 2

USERS = {"approve": UserAgent.ALWAYS_APPROVE, "deny": UserAgent.ALWAYS_DENY}


def golden_path(suite: Suite, policy: PolicyId) -> Path:
    name = f"data/goldens/{suite.value}-{policy.value}.json"
    return Path(str(resources.files("autofill_sim").joinpath(name)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autofill-sim", description="Simulate mobile password autofill and score it."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one conformance suite")
    run.add_argument("--suite", required=True, choices=[s.value for s in Suite])
    run.add_argument("--framework", required=True, choices=[p.value for p in PolicyId])
    run.add_argument("--manager", help="manager preset id (omit for the framework default)")
    run.add_argument("--report", choices=("json", "markdown"), default="markdown")
    run.add_argument("--golden", type=Path, help="compare against this golden report")

    attack = sub.add_parser("attack", help="run one attack scenario")
    attack.add_argument("--attack", required=True, choices=[a.value for a in AttackKind])
    attack.add_argument("--framework", required=True, choices=[p.value for p in PolicyId])
    attack.add_argument("--manager")
    attack.add_argument("--user", choices=tuple(USERS), default="approve")
    attack.add_argument("--victim", default="walmart.com")
    attack.add_argument(
        "--reveal", action="store_true", help="print captured secret values in clear"
    )

    matrix = sub.add_parser("matrix", help="every suite and framework, plus the attack matrix")
    matrix.add_argument("--report", choices=("json", "markdown"), default="markdown")
    return parser


def _mask(value: str, secrets: set[str]) -> str:
    for s in secrets:
        value = value.replace(s, "*" * 8)
    return value


def cmd_run(args: argparse.Namespace) -> int:
    report = run_suite(args.suite, args.framework, args.manager)
    sys.stdout.write(render_report(report, args.report))
    if args.golden is None:
        return EXIT_OK
    diff = compare_golden(report, args.golden)
    for check, want, got in diff:
        print(f"mismatch {check.value}: expected {want.value}, got {got.value}", file=sys.stderr)
    return EXIT_DIFF if diff else EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    policy = PolicyId(args.framework)
    manager = preset(policy, args.manager) if args.manager else None
    scenario = build_scenario(args.attack, args.victim)
    log = run_ceremony(policy, manager, scenario.context, scenario.scene, USERS[args.user])
    outcome = classify(log, scenario)
    print(f"{args.attack} vs {policy.value}: {outcome.label}")
    for theft in outcome.thefts:
        print(f"  {theft.credential_id} -> {theft.captured_by} via {theft.channel}")
    secrets = {c.password for c in scenario.scene.vault.credentials}
    for dest, channel, value in captured_values(log, scenario.scene):
        shown = value if args.reveal else _mask(value, secrets)
        print(f"  captured [{channel}] {dest}: {shown}")
    stolen = outcome.result is OutcomeKind.STOLEN or outcome.then is OutcomeKind.STOLEN
    return EXIT_DIFF if stolen and policy is PolicyId.SECURE else EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    matrix = run_matrix()
    sys.stdout.write(render_matrix(matrix, args.report))
    status = EXIT_OK
    for report in matrix.reports:
        path = golden_path(report.suite, report.policy)
        if not path.is_file():
            continue
        for check, want, got in compare_golden(report, path):
            print(
                f"mismatch {report.suite.value}/{report.subject} {check.value}: "
                f"expected {want.value}, got {got.value}",
                file=sys.stderr,
            )
            status = EXIT_DIFF
    for record in matrix.attacks:
        o = record.outcome
        if record.policy is PolicyId.SECURE and OutcomeKind.STOLEN in (o.result, o.then):
            print(f"secure model lost a secret to {record.attack.value}", file=sys.stderr)
            status = EXIT_DIFF
    return status


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "attack": cmd_attack, "matrix": cmd_matrix}[args.command]
    try:
        return handler(args)
    except AutofillSimError as exc:
        print(f"autofill-sim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
