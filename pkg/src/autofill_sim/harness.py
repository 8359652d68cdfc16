"""Conformance runner, golden comparison and report rendering.

Each check in a suite has a fixture: a scene plus a fill context. A cell's
verdict comes from running the full ceremony on that fixture twice, once
with a user who approves and once with a user who denies, and combining
what the framework declared with what actually leaked.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from autofill_sim.attacks import (
    AttackKind,
    AttackOutcome,
    OutcomeKind,
    Theft,
    captures,
    find_thefts,
    run_attack,
)
from autofill_sim.errors import FixtureMissing, GoldenParseError, SchemaError
from autofill_sim.frameworks import (
    ALL_POLICIES,
    BrowserPage,
    CeremonyLog,
    CheckId,
    FillContext,
    Gate,
    ManagerProfile,
    NativeUi,
    PolicyId,
    Verdict,
    WebViewInApp,
    preset,
    run_ceremony,
)
from autofill_sim.model import (
    DomainName,
    Scene,
    UserAgent,
    scene_from_dict,
    scene_to_dict,
)
from autofill_sim.webdoc import (
    ExfiltrateTo,
    FormRef,
    PostToBridge,
    RewriteAction,
    ScrapeFields,
    ScriptEvent,
    load_document,
    script_from_spec,
    visible_state,
)

__all__ = [
    "Verdict",
    "Suite",
    "SUITE_CHECKS",
    "ConformanceReport",
    "AttackRecord",
    "Diff",
    "run_suite",
    "compare_golden",
    "render_report",
    "parse_report",
    "run_attack_matrix",
    "run_matrix",
    "render_matrix",
]


class Suite(str, Enum):
    BROWSER = "browser"
    NATIVE = "native"
    WEBVIEW = "webview"


C = CheckId

SUITE_CHECKS: dict[Suite, tuple[CheckId, ...]] = {
    Suite.BROWSER: (
        C.INTERACTION_REQUIRED,
        C.DOMAIN_MAPPING,
        C.HTTPS_DOWNGRADE,
        C.BAD_CERT,
        C.FILL_ON_TRANSMISSION,
        C.ACTION_STATIC,
        C.ACTION_DYNAMIC,
        C.METHOD_GET,
        C.CROSS_ORIGIN_IFRAME,
    ),
    Suite.NATIVE: (
        C.INTERACTION_REQUIRED,
        C.APP_TO_DOMAIN,
        C.DOMAIN_TO_APP,
        C.OTHER_APP_ACCESS,
        C.WEBVIEW_HOST_ACCESS,
    ),
    Suite.WEBVIEW: (
        C.INTERACTION_REQUIRED,
        C.DOMAIN_MAPPING,
        C.HTTPS_DOWNGRADE,
        C.BAD_CERT,
        C.WEBVIEW_HOST_ACCESS,
        C.FILL_ON_TRANSMISSION,
        C.ACTION_STATIC,
        C.ACTION_DYNAMIC,
        C.METHOD_GET,
        C.CROSS_ORIGIN_IFRAME,
    ),
}

# choices a framework leaves to the installed manager
DELEGATED: dict[tuple[Suite, PolicyId], frozenset[CheckId]] = {
    (Suite.BROWSER, PolicyId.ANDROID_SERVICE): frozenset({C.CROSS_ORIGIN_IFRAME}),
    (Suite.NATIVE, PolicyId.ANDROID_SERVICE): frozenset({C.APP_TO_DOMAIN, C.DOMAIN_TO_APP}),
    (Suite.WEBVIEW, PolicyId.EXTENSIONS): frozenset({C.DOMAIN_MAPPING}),
    (Suite.WEBVIEW, PolicyId.ANDROID_SERVICE): frozenset({C.DOMAIN_MAPPING, C.CROSS_ORIGIN_IFRAME}),
}

GLYPHS = {
    Verdict.SECURE: "●",
    Verdict.PARTIAL: "◐",
    Verdict.INSECURE: "○",
    Verdict.DELEGATED: "✎",
    Verdict.NOT_APPLICABLE: "–",
}

FIXTURES_ENV = "AUTOFILL_SIM_FIXTURES"


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class AttackRecord:
    attack: AttackKind
    policy: PolicyId
    manager: str | None
    user: UserAgent
    outcome: AttackOutcome


@dataclass(frozen=True)
class ConformanceReport:
    suite: Suite
    policy: PolicyId
    manager: str | None
    cells: tuple[tuple[CheckId, Verdict], ...]
    attack_outcomes: tuple[AttackRecord, ...] = ()

    def __post_init__(self) -> None:
        order = tuple(c for c, _ in self.cells)
        if order != SUITE_CHECKS[self.suite]:
            raise ValueError(f"cells out of column order for {self.suite.value}")

    @property
    def subject(self) -> str:
        return self.policy.value if self.manager is None else f"{self.policy.value}/{self.manager}"

    def verdicts(self) -> tuple[Verdict, ...]:
        return tuple(v for _, v in self.cells)


@dataclass(frozen=True)
class Diff:
    mismatches: tuple[tuple[CheckId, Verdict, Verdict], ...] = ()

    def __bool__(self) -> bool:
        return bool(self.mismatches)

    def __len__(self) -> int:
        return len(self.mismatches)

    def __iter__(self):
        return iter(self.mismatches)


# --- fixtures ----------------------------------------------------------------


def default_fixture_dir() -> Path:
    override = os.environ.get(FIXTURES_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("autofill_sim").joinpath("data/fixtures")))


def script_to_spec(event: ScriptEvent) -> dict[str, Any]:
    action = event.action
    spec: dict[str, Any] = {"phase": event.phase.value}
    if isinstance(action, RewriteAction):
        spec.update({"do": "rewrite-action", "form": action.form, "url": str(action.target)})
    elif isinstance(action, ScrapeFields):
        spec.update({"do": "scrape", "form": action.form})
    elif isinstance(action, ExfiltrateTo):
        spec.update({"do": "exfiltrate", "url": str(action.destination)})
    elif isinstance(action, PostToBridge):
        spec.update({"do": "bridge", "channel": action.channel})
    spec["injected_by"] = event.injected_by.value
    return spec


def context_to_dict(ctx: FillContext) -> dict[str, Any]:
    kind = ctx.kind
    if isinstance(kind, NativeUi):
        out: dict[str, Any] = {"kind": "native", "app": kind.app.package_id}
        if kind.requested_domain is not None:
            out["requested_domain"] = str(kind.requested_domain)
        if not kind.annotated:
            out["annotated"] = False
        return out
    out = {"url": str(kind.document.endpoint)}
    if isinstance(kind, WebViewInApp):
        out = {"kind": "webview", "host": kind.host.package_id, **out}
        if kind.host_scripts:
            out["host_scripts"] = [script_to_spec(s) for s in kind.host_scripts]
    else:
        out = {"kind": "browser", **out}
    out["frames"] = list(ctx.target.frames)
    out["form"] = ctx.target.form
    return out


def context_from_dict(data: dict[str, Any], scene: Scene) -> FillContext:
    try:
        kind = data["kind"]
        if kind == "native":
            requested = data.get("requested_domain")
            return FillContext(
                NativeUi(
                    scene.app(data["app"]),
                    annotated=data.get("annotated", True),
                    requested_domain=DomainName.parse(requested) if requested else None,
                )
            )
        endpoint = scene.resolve_url(data["url"])
        doc = load_document(scene, endpoint)
        target = FormRef(tuple(data.get("frames", [])), data.get("form", 0))
        if kind == "browser":
            return FillContext(BrowserPage(doc), target)
        if kind == "webview":
            scripts = tuple(
                script_from_spec(s, endpoint, scene.resolve_url)
                for s in data.get("host_scripts", [])
            )
            return FillContext(WebViewInApp(scene.app(data["host"]), doc, scripts), target)
    except KeyError as exc:
        raise SchemaError(f"fixture context lacks {exc}") from None
    raise SchemaError(f"unknown context kind {data.get('kind')!r}")


def fixture_to_dict(check: CheckId, scene: Scene, ctx: FillContext) -> dict[str, Any]:
    return {"check": check.value, "scene": scene_to_dict(scene), "context": context_to_dict(ctx)}


def load_fixture(path: Path) -> tuple[Scene, FillContext]:
    data = json.loads(path.read_text())
    scene = scene_from_dict(data["scene"])
    return scene, context_from_dict(data["context"], scene)


def _fixture_path(scene_dir: Path, suite: Suite, check: CheckId) -> Path:
    path = scene_dir / suite.value / f"{check.value}.json"
    if not path.is_file():
        raise FixtureMissing(f"no fixture for {suite.value}/{check.value} under {scene_dir}")
    return path


# --- verdicts ----------------------------------------------------------------


def secrets_exposed(log: CeremonyLog, scene: Scene) -> bool:
    """True if any vault password shows up anywhere the ceremony produced."""
    seen: list[str] = list(log.filled.native_values.values())
    if log.document is not None:
        seen += visible_state(log.document, log.filled.fill_state)
    for ex in log.exfiltrations:
        seen += [v for _, v in ex.values]
    if log.request is not None:
        seen += log.request.all_values()
    secrets = [c.password for c in scene.vault.credentials if c.password]
    return any(s in v for s in secrets for v in seen)


def measure_check(
    check: CheckId,
    policy: PolicyId,
    manager: ManagerProfile | None,
    scene: Scene,
    ctx: FillContext,
) -> Verdict:
    approve = run_ceremony(policy, manager, ctx, scene, UserAgent.ALWAYS_APPROVE, _fixed_nonce)
    if check is CheckId.INTERACTION_REQUIRED:
        deny = run_ceremony(policy, manager, ctx, scene, UserAgent.ALWAYS_DENY, _fixed_nonce)
        gated = all(
            log.decision.gate is Gate.USER_GATE_REQUIRED or not log.decision.offered
            for log in (approve, deny)
        )
        return Verdict.SECURE if gated and not secrets_exposed(deny, scene) else Verdict.INSECURE
    leaked = bool(find_thefts(approve, scene))
    declared = approve.decision.check(check)
    if declared is None:
        return Verdict.INSECURE if leaked else Verdict.SECURE
    if declared is Verdict.SECURE and leaked:
        return Verdict.INSECURE
    return declared


def _fixed_nonce() -> str:
    return "0" * 16


def run_suite(
    suite: Suite | str,
    policy: PolicyId | str,
    manager: ManagerProfile | str | None = None,
    scene_dir: Path | str | None = None,
) -> ConformanceReport:
    suite = Suite(suite)
    policy = PolicyId(policy)
    if isinstance(manager, str):
        manager = preset(policy, manager)
    scene_dir = Path(scene_dir) if scene_dir is not None else default_fixture_dir()
    checks = SUITE_CHECKS[suite]
    paths = [_fixture_path(scene_dir, suite, c) for c in checks]
    delegated = DELEGATED.get((suite, policy), frozenset()) if manager is None else frozenset()

    def cell(item: tuple[CheckId, Path]) -> Verdict:
        check, path = item
        if check in delegated:
            return Verdict.DELEGATED
        scene, ctx = load_fixture(path)
        return measure_check(check, policy, manager, scene, ctx)

    with ThreadPoolExecutor() as pool:
        verdicts = list(pool.map(cell, zip(checks, paths)))
    return ConformanceReport(
        suite, policy, manager.name if manager else None, tuple(zip(checks, verdicts))
    )


# --- goldens -----------------------------------------------------------------


def compare_golden(report: ConformanceReport, golden: Path | str) -> Diff:
    try:
        expected = parse_report(Path(golden).read_text())
    except OSError as exc:
        raise GoldenParseError(f"cannot read golden {golden}: {exc}") from None
    if (expected.suite, expected.policy, expected.manager) != (
        report.suite,
        report.policy,
        report.manager,
    ):
        raise GoldenParseError(
            f"golden {golden} describes {expected.subject}, not {report.subject}"
        )
    return Diff(
        tuple(
            (check, want, got)
            for (check, want), (_, got) in zip(expected.cells, report.cells)
            if want is not got
        )
    )


# --- rendering ---------------------------------------------------------------


def _outcome_to_dict(outcome: AttackOutcome) -> dict[str, Any]:
    return {
        "label": outcome.label,
        "result": outcome.result.value,
        "then": outcome.then.value if outcome.then else None,
        "reason": outcome.reason,
        "thefts": [
            {"credential": t.credential_id, "captured_by": t.captured_by, "channel": t.channel}
            for t in outcome.thefts
        ],
    }


def _outcome_from_dict(data: dict[str, Any]) -> AttackOutcome:
    return AttackOutcome(
        OutcomeKind(data["result"]),
        OutcomeKind(data["then"]) if data.get("then") else None,
        tuple(
            Theft(t["credential"], t["captured_by"], t["channel"]) for t in data.get("thefts", [])
        ),
        data.get("reason"),
    )


def report_to_dict(report: ConformanceReport) -> dict[str, Any]:
    out: dict[str, Any] = {
        "suite": report.suite.value,
        "framework": report.policy.value,
        "manager": report.manager,
        "cells": [{"check": c.value, "verdict": v.value} for c, v in report.cells],
    }
    if report.attack_outcomes:
        out["attack_outcomes"] = [_record_to_dict(r) for r in report.attack_outcomes]
    return out


def _record_to_dict(r: AttackRecord) -> dict[str, Any]:
    return {
        "attack": r.attack.value,
        "framework": r.policy.value,
        "manager": r.manager,
        "user": r.user.value,
        "outcome": _outcome_to_dict(r.outcome),
    }


def _record_from_dict(data: dict[str, Any]) -> AttackRecord:
    return AttackRecord(
        AttackKind(data["attack"]),
        PolicyId(data["framework"]),
        data.get("manager"),
        UserAgent(data["user"]),
        _outcome_from_dict(data["outcome"]),
    )


def report_from_dict(data: dict[str, Any]) -> ConformanceReport:
    try:
        suite = Suite(data["suite"])
        cells = tuple((CheckId(c["check"]), Verdict(c["verdict"])) for c in data["cells"])
        return ConformanceReport(
            suite,
            PolicyId(data["framework"]),
            data.get("manager"),
            cells,
            tuple(_record_from_dict(r) for r in data.get("attack_outcomes", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GoldenParseError(f"malformed report: {exc}") from None


def parse_report(text: str) -> ConformanceReport:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GoldenParseError(f"report is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise GoldenParseError("report must be a JSON object")
    return report_from_dict(data)


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def _attack_table(records: Sequence[AttackRecord]) -> list[str]:
    return _table(
        ("Attack", "Framework", "Manager", "User", "Outcome"),
        (
            (r.attack.value, r.policy.value, r.manager or "-", r.user.value, r.outcome.label)
            for r in records
        ),
    )


LEGEND = "Legend: ● secure, ◐ partial, ○ insecure, ✎ delegated to the password manager"


def render_report(report: ConformanceReport, format: str = "markdown") -> str:
    if format == "json":
        return _dumps(report_to_dict(report))
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines = [f"## {report.suite.value} suite", ""]
    lines += _table(
        ("Subject",) + tuple(c.value for c in SUITE_CHECKS[report.suite]),
        [(report.subject,) + tuple(GLYPHS[v] for v in report.verdicts())],
    )
    lines += ["", LEGEND]
    if report.attack_outcomes:
        lines += ["", "## attacks", ""] + _attack_table(report.attack_outcomes)
    return "\n".join(lines) + "\n"


# --- matrix ------------------------------------------------------------------


def run_attack_matrix(
    attacks: Iterable[AttackKind] = tuple(AttackKind),
    policies: Iterable[PolicyId] = ALL_POLICIES,
    users: Iterable[UserAgent] = (UserAgent.ALWAYS_APPROVE, UserAgent.ALWAYS_DENY),
) -> tuple[AttackRecord, ...]:
    jobs = [(a, p, u) for a in attacks for p in policies for u in users]
    with ThreadPoolExecutor() as pool:
        outcomes = list(pool.map(lambda j: run_attack(j[0], j[1], None, j[2]), jobs))
    return tuple(AttackRecord(a, p, None, u, o) for (a, p, u), o in zip(jobs, outcomes))


@dataclass(frozen=True)
class Matrix:
    reports: tuple[ConformanceReport, ...]
    attacks: tuple[AttackRecord, ...]


def run_matrix(scene_dir: Path | str | None = None) -> Matrix:
    reports = tuple(run_suite(s, p, None, scene_dir) for s in Suite for p in ALL_POLICIES)
    return Matrix(reports, run_attack_matrix())


def render_matrix(matrix: Matrix, format: str = "markdown") -> str:
    if format == "json":
        return _dumps(
            {
                "reports": [report_to_dict(r) for r in matrix.reports],
                "attacks": [_record_to_dict(r) for r in matrix.attacks],
            }
        )
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines: list[str] = []
    for suite in Suite:
        rows = [r for r in matrix.reports if r.suite is suite]
        lines += [f"## {suite.value} suite", ""]
        lines += _table(
            ("Subject",) + tuple(c.value for c in SUITE_CHECKS[suite]),
            [(r.subject,) + tuple(GLYPHS[v] for v in r.verdicts()) for r in rows],
        )
        lines.append("")
    lines += [LEGEND, "", "## attacks", ""] + _attack_table(matrix.attacks)
    return "\n".join(lines) + "\n"


def captured_values(log: CeremonyLog, scene: Scene) -> list[tuple[str, str, str]]:
    """(destination, channel, value) for everything that left the page or app."""
    return [(c.destination_label(), c.channel, v) for c in captures(log, scene) for v in c.values]
