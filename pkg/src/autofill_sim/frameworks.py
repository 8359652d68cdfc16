"""Autofill framework policies and the autofill ceremony.

Four policies are modelled: the two iOS frameworks, the Android autofill
service, and `SecureModel`, a framework that applies every hardening measure
(user gate, authenticated domains, bidirectional app mapping, form checks and
fill-on-transmission). The ceremony is

    on-load scripts → suggest → user gate → pre-fill scripts → fill
    → post-fill scripts → transmission
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Callable

from autofill_sim.association import (
    Decision,
    MappingScheme,
    MappingVerdict,
    Platform,
    SchemeKind,
    dal_files_in_scene,
    map_by_heuristic,
    verify_in_scene,
)
from autofill_sim.errors import (
    GateBypassAttempt,
    MissingSubstitution,
    SchemaError,
    UnsupportedContext,
)
from autofill_sim.model import (
    AppIdentity,
    Credential,
    DomainName,
    Endpoint,
    Origin,
    Scene,
    SecurityKind,
    UserAgent,
    credentials_for_domain,
)
from autofill_sim.webdoc import (
    Document,
    Exfiltration,
    Field,
    FieldKey,
    FieldKind,
    Form,
    FormRef,
    InjectedBy,
    Method,
    OutboundRequest,
    ScriptEvent,
    ScriptPhase,
    Substitution,
    detect_login_form,
    make_placeholder,
    run_script_phase,
    submit_form,
)


class PolicyId(str, Enum):
    EXTENSIONS = "ios-extensions"
    PASSWORD_AUTOFILL = "ios-password-autofill"
    ANDROID_SERVICE = "android-autofill-service"
    SECURE = "secure-model"


LEGACY_POLICIES = (PolicyId.PASSWORD_AUTOFILL, PolicyId.EXTENSIONS, PolicyId.ANDROID_SERVICE)
ALL_POLICIES = LEGACY_POLICIES + (PolicyId.SECURE,)


class CheckId(str, Enum):
    INTERACTION_REQUIRED = "interaction-required"
    DOMAIN_MAPPING = "domain-mapping"
    HTTPS_DOWNGRADE = "https-downgrade"
    BAD_CERT = "bad-cert"
    ACTION_STATIC = "action-static"
    ACTION_DYNAMIC = "action-dynamic"
    METHOD_GET = "method-get"
    CROSS_ORIGIN_IFRAME = "cross-origin-iframe"
    FILL_ON_TRANSMISSION = "fill-on-transmission"
    APP_TO_DOMAIN = "app-to-domain"
    DOMAIN_TO_APP = "domain-to-app"
    OTHER_APP_ACCESS = "other-app-access"
    WEBVIEW_HOST_ACCESS = "webview-host-access"


class Verdict(str, Enum):
    SECURE = "secure"
    PARTIAL = "partial"
    INSECURE = "insecure"
    DELEGATED = "delegated"
    NOT_APPLICABLE = "not-applicable"


class Gate(str, Enum):
    USER_GATE_REQUIRED = "user-gate-required"
    NO_GATE = "no-gate"


class FillMode(str, Enum):
    INTO_DOCUMENT = "into-document"
    ON_TRANSMISSION = "on-transmission"


class WebViewPolicy(str, Enum):
    BY_PAGE_DOMAIN = "by-page-domain"
    BY_APP_MAPPING = "by-app-mapping"
    REFUSE = "refuse"


class IframePolicy(str, Enum):
    FILL = "fill"
    BLOCK = "block"
    WARN = "warn"


# --- manager profiles --------------------------------------------------------


@dataclass(frozen=True)
class ManagerProfile:
    name: str
    framework: PolicyId
    native_scheme: MappingScheme
    webview_policy: WebViewPolicy = WebViewPolicy.BY_PAGE_DOMAIN
    iframe_policy: IframePolicy = IframePolicy.FILL
    warns_on_manual: bool = False
    warns_on_http: bool = False

    @property
    def id(self) -> str:
        return self.name


def framework_default(policy: PolicyId) -> ManagerProfile:
    """Behaviour of a framework when no manager overrides its delegated choices."""
    return ManagerProfile(
        name="(framework default)",
        framework=policy,
        native_scheme=MappingScheme(SchemeKind.MANUAL),
    )


def _scheme_from_dict(data: dict[str, Any]) -> MappingScheme:
    return MappingScheme(
        SchemeKind(data["kind"]), dict(data.get("table", {})), dict(data.get("alternate", {}))
    )


@lru_cache(maxsize=1)
def load_presets() -> dict[PolicyId, dict[str, ManagerProfile]]:
    raw = json.loads(resources.files("autofill_sim").joinpath("data/presets.json").read_text())
    out: dict[PolicyId, dict[str, ManagerProfile]] = {}
    for framework, managers in raw["frameworks"].items():
        policy = PolicyId(framework)
        out[policy] = {
            name: ManagerProfile(
                name=name,
                framework=policy,
                native_scheme=_scheme_from_dict(p["native_scheme"]),
                webview_policy=WebViewPolicy(p["webview_policy"]),
                iframe_policy=IframePolicy(p["iframe_policy"]),
                warns_on_manual=p["warns_on_manual"],
                warns_on_http=p["warns_on_http"],
            )
            for name, p in managers.items()
        }
    return out


def preset(policy: PolicyId | str, name: str) -> ManagerProfile:
    policy = PolicyId(policy)
    try:
        return load_presets()[policy][name]
    except KeyError:
        raise SchemaError(f"no {name!r} manager preset for {policy.value}") from None


# --- contexts ----------------------------------------------------------------

DEFAULT_NATIVE_FIELDS = (
    Field("username", FieldKind.USERNAME),
    Field("password", FieldKind.PASSWORD, input_type="password"),
)


@dataclass(frozen=True)
class BrowserPage:
    document: Document


@dataclass(frozen=True)
class NativeUi:
    app: AppIdentity
    annotated: bool = True
    requested_domain: DomainName | None = None
    fields: tuple[Field, ...] = DEFAULT_NATIVE_FIELDS


@dataclass(frozen=True)
class WebViewInApp:
    host: AppIdentity
    document: Document
    host_scripts: tuple[ScriptEvent, ...] = ()

    def __post_init__(self) -> None:
        if any(s.injected_by is not InjectedBy.HOST_APP for s in self.host_scripts):
            raise ValueError("WebView host scripts must be injected by the host app")


@dataclass(frozen=True)
class CustomUi:
    """App-drawn widgets; no framework can autofill these."""

    app: AppIdentity


ContextKind = BrowserPage | NativeUi | WebViewInApp | CustomUi


@dataclass(frozen=True)
class FillContext:
    kind: ContextKind
    target: FormRef = FormRef((), 0)

    @property
    def document(self) -> Document | None:
        if isinstance(self.kind, (BrowserPage, WebViewInApp)):
            return self.kind.document
        return None

    @property
    def in_webview(self) -> bool:
        return isinstance(self.kind, WebViewInApp)

    def with_document(self, doc: Document) -> FillContext:
        return replace(self, kind=replace(self.kind, document=doc))


# --- decisions ---------------------------------------------------------------


@dataclass(frozen=True)
class FillDecision:
    policy: PolicyId
    gate: Gate
    offered: tuple[Credential, ...]
    fill_mode: FillMode
    checks: tuple[tuple[CheckId, Verdict], ...]
    warning: str | None = None
    refused_by: CheckId | None = None
    action_origin: Origin | None = None
    context: FillContext | None = field(default=None, repr=False, compare=False)

    def check(self, check_id: CheckId) -> Verdict | None:
        for cid, verdict in self.checks:
            if cid is check_id:
                return verdict
        return None


def _login_fields(ctx: FillContext) -> tuple[str, str]:
    if isinstance(ctx.kind, NativeUi):
        fields = ctx.kind.fields
        if not ctx.kind.annotated:
            # unannotated screens fall back to the page heuristic on raw input types
            fields = tuple(
                replace(
                    f, kind=FieldKind.PASSWORD if f.input_type == "password" else FieldKind.TEXT
                )
                for f in fields
            )
        form = Form(_native_endpoint(ctx.kind.app), Method.POST, fields)
        hits = detect_login_form(Document(form.action, (form,)))
    else:
        doc = ctx.document.subdocument(ctx.target.frames)
        hits = [h for h in detect_login_form(doc) if h[0] == ctx.target.form]
    if not hits:
        raise UnsupportedContext("fill target is not a detectable login form")
    _, user, password = hits[0]
    return user.name, password.name


def _native_endpoint(app: AppIdentity) -> Endpoint:
    return Endpoint(Origin(DomainName(("app", "local"))), "/" + app.package_id)


def host_app_mapping(profile: ManagerProfile, app: AppIdentity, scene: Scene) -> MappingVerdict:
    """Domains a manager associates with an app under its native scheme."""
    scheme = profile.native_scheme
    if scheme.kind is SchemeKind.BIDIRECTIONAL:
        verified = [
            d
            for d in app.entitled_domains
            if verify_in_scene(scene, app, d, Platform.APPLE).decision is Decision.VERIFIED
        ]
        if not verified:
            return MappingVerdict(Decision.NOT_VERIFIED, (), ("no-verified-domain",))
        return MappingVerdict(Decision.VERIFIED, tuple(verified))
    return map_by_heuristic(
        scheme,
        app,
        scene.vault.domains(),
        scene.vault,
        association_files=dal_files_in_scene(scene),
        suffixes=scene.suffixes,
    )


def bidirectionally_verified(scene: Scene, app: AppIdentity, domain: DomainName) -> bool:
    return any(
        verify_in_scene(scene, app, domain, platform).decision is Decision.VERIFIED
        for platform in Platform
    )


def _creds_for_domains(scene: Scene, domains: tuple[DomainName, ...]) -> list[Credential]:
    out: dict[str, Credential] = {}
    for d in domains:
        for c in credentials_for_domain(scene.vault, Origin(d), scene.suffixes):
            out[c.id] = c
    return sorted(out.values(), key=lambda c: c.id)


class _Checks:
    def __init__(self) -> None:
        self.items: list[tuple[CheckId, Verdict]] = []
        self.refused_by: CheckId | None = None
        self.warnings: list[str] = []

    def add(self, check: CheckId, verdict: Verdict) -> None:
        self.items.append((check, verdict))

    def refuse(self, check: CheckId) -> None:
        self.add(check, Verdict.SECURE)
        if self.refused_by is None:
            self.refused_by = check

    def warn(self, check: CheckId, message: str) -> None:
        self.add(check, Verdict.PARTIAL)
        self.warnings.append(message)


def suggest(
    policy: PolicyId | str,
    manager: ManagerProfile | None,
    ctx: FillContext,
    scene: Scene,
) -> FillDecision:
    """Decide the gate, the credentials offered and how they will be filled."""
    policy = PolicyId(policy)
    profile = manager or framework_default(policy)
    if isinstance(ctx.kind, CustomUi):
        raise UnsupportedContext("autofill frameworks do not support custom-drawn UI")
    _login_fields(ctx)
    if isinstance(ctx.kind, NativeUi):
        return _suggest_native(policy, profile, ctx, scene)
    return _suggest_web(policy, profile, ctx, scene)


def _decision(
    policy: PolicyId,
    ctx: FillContext,
    offered: list[Credential],
    checks: _Checks,
    action_origin: Origin | None = None,
) -> FillDecision:
    mode = FillMode.ON_TRANSMISSION if policy is PolicyId.SECURE else FillMode.INTO_DOCUMENT
    checks.add(
        CheckId.FILL_ON_TRANSMISSION,
        Verdict.SECURE if mode is FillMode.ON_TRANSMISSION else Verdict.INSECURE,
    )
    if checks.refused_by is not None:
        offered = []
    checks.items.insert(0, (CheckId.INTERACTION_REQUIRED, Verdict.SECURE))
    return FillDecision(
        policy=policy,
        gate=Gate.USER_GATE_REQUIRED,
        offered=tuple(offered),
        fill_mode=mode,
        checks=tuple(checks.items),
        warning="; ".join(checks.warnings) or None,
        refused_by=checks.refused_by,
        action_origin=action_origin,
        context=ctx,
    )


def _suggest_native(
    policy: PolicyId, profile: ManagerProfile, ctx: FillContext, scene: Scene
) -> FillDecision:
    ui: NativeUi = ctx.kind
    app = ui.app
    checks = _Checks()
    if policy in (PolicyId.PASSWORD_AUTOFILL, PolicyId.SECURE):
        platforms = (Platform.APPLE,) if policy is PolicyId.PASSWORD_AUTOFILL else tuple(Platform)
        domains = tuple(
            d
            for d in app.entitled_domains
            if any(
                verify_in_scene(scene, app, d, p).decision is Decision.VERIFIED for p in platforms
            )
        )
        if ui.requested_domain is not None:
            domains = tuple(d for d in domains if d.same_site(ui.requested_domain, scene.suffixes))
        offered = _creds_for_domains(scene, domains)
    elif policy is PolicyId.EXTENSIONS:
        # the extension API passes along whatever URL the app asks for
        domains = (ui.requested_domain,) if ui.requested_domain is not None else ()
        offered = _creds_for_domains(scene, domains)
    else:
        verdict = host_app_mapping(profile, app, scene)
        offered = _creds_for_domains(scene, verdict.matched_domains) if verdict.accepted else []
        if verdict.decision is Decision.USER_CONFIRM_REQUIRED:
            manual = "manual-association" in verdict.reasons
            if not manual or profile.warns_on_manual:
                checks.warnings.append(f"unverified app {app.package_id}")

    partial = bool(checks.warnings)
    unentitled = [c for c in offered if c.mapped_domain not in app.entitled_domains]
    unlisted = [c for c in offered if not _domain_lists_app(scene, app, c.mapped_domain)]
    bad = Verdict.PARTIAL if partial else Verdict.INSECURE
    checks.add(CheckId.APP_TO_DOMAIN, bad if unentitled else Verdict.SECURE)
    checks.add(CheckId.DOMAIN_TO_APP, bad if unlisted else Verdict.SECURE)
    return _decision(policy, ctx, offered, checks)


def _domain_lists_app(scene: Scene, app: AppIdentity, domain: DomainName) -> bool:
    for platform in Platform:
        verdict = verify_in_scene(scene, app, domain, platform)
        if not {"app-not-listed-by-domain", "fingerprint-mismatch"} & set(verdict.reasons):
            return True
    return False


def _suggest_web(
    policy: PolicyId, profile: ManagerProfile, ctx: FillContext, scene: Scene
) -> FillDecision:
    top = ctx.document
    doc = top.subdocument(ctx.target.frames)
    form = doc.forms[ctx.target.form]
    page = doc.origin
    checks = _Checks()
    delegates = policy in (PolicyId.EXTENSIONS, PolicyId.ANDROID_SERVICE)

    # mapping: which credentials
    mapping_warning = False
    if ctx.in_webview and delegates and profile.webview_policy is not WebViewPolicy.BY_PAGE_DOMAIN:
        if profile.webview_policy is WebViewPolicy.REFUSE:
            candidates: list[Credential] = []
            checks.refuse(CheckId.DOMAIN_MAPPING)
        else:
            verdict = host_app_mapping(profile, ctx.kind.host, scene)
            candidates = (
                _creds_for_domains(scene, verdict.matched_domains) if verdict.accepted else []
            )
            if verdict.decision is Decision.USER_CONFIRM_REQUIRED and (
                "manual-association" not in verdict.reasons or profile.warns_on_manual
            ):
                mapping_warning = True
    else:
        candidates = credentials_for_domain(scene.vault, page, scene.suffixes)
    if checks.refused_by is None:
        mismatched = [
            c for c in candidates if not c.mapped_domain.same_site(page.domain, scene.suffixes)
        ]
        if mismatched and mapping_warning:
            checks.warn(
                CheckId.DOMAIN_MAPPING, "credentials mapped via an unverified app association"
            )
        else:
            checks.add(CheckId.DOMAIN_MAPPING, Verdict.INSECURE if mismatched else Verdict.SECURE)

    # mapping: authenticated page
    if not page.security.authenticated:
        check = (
            CheckId.HTTPS_DOWNGRADE if page.security.kind is SecurityKind.HTTP else CheckId.BAD_CERT
        )
        if policy is PolicyId.SECURE:
            checks.refuse(check)
        elif delegates and profile.warns_on_http and check is CheckId.HTTPS_DOWNGRADE:
            checks.warn(check, "page is not served over HTTPS")
        else:
            checks.add(check, Verdict.INSECURE)

    # containment: cross-origin frames
    if ctx.target.frames and not doc.origin.same_origin(top.origin):
        check = CheckId.CROSS_ORIGIN_IFRAME
        if policy in (PolicyId.SECURE, PolicyId.EXTENSIONS):
            checks.refuse(check)
        elif policy is PolicyId.PASSWORD_AUTOFILL:
            checks.add(check, Verdict.INSECURE)
        elif profile.iframe_policy is IframePolicy.BLOCK:
            checks.refuse(check)
        elif profile.iframe_policy is IframePolicy.WARN:
            checks.warn(check, "login form is inside a cross-origin frame")
        else:
            checks.add(check, Verdict.INSECURE)

    # containment: where the form will send the password
    if not form.action.origin.domain.same_site(page.domain, scene.suffixes):
        if policy is PolicyId.SECURE:
            checks.refuse(CheckId.ACTION_STATIC)
        else:
            checks.add(CheckId.ACTION_STATIC, Verdict.INSECURE)
    if policy is PolicyId.SECURE and not form.action.origin.security.authenticated:
        checks.refuse(
            CheckId.HTTPS_DOWNGRADE
            if form.action.origin.security.kind is SecurityKind.HTTP
            else CheckId.BAD_CERT
        )
    if form.method is Method.GET:
        if policy is PolicyId.SECURE:
            checks.refuse(CheckId.METHOD_GET)
        else:
            checks.add(CheckId.METHOD_GET, Verdict.INSECURE)

    return _decision(policy, ctx, candidates, checks, action_origin=form.action.origin)


# --- filling -----------------------------------------------------------------


@dataclass(frozen=True)
class FilledState:
    decision: FillDecision
    approved: bool
    credential_id: str | None = None
    fill_state: dict[FieldKey, str] = field(default_factory=dict)
    native_values: dict[str, str] = field(default_factory=dict)
    substitution: Substitution | None = field(default=None, repr=False)

    @property
    def empty(self) -> bool:
        return not self.fill_state and not self.native_values


NonceSource = Callable[[], str]


def execute_fill(
    decision: FillDecision,
    user: UserAgent,
    ctx: FillContext,
    scene: Scene,
    nonce_source: NonceSource | None = None,
) -> FilledState:
    """Place the first offered credential, but only once the user approves."""
    if decision.context is None or decision.context != ctx:
        raise GateBypassAttempt("fill decision was not produced by suggest() for this context")
    if decision.offered and decision.gate is not Gate.USER_GATE_REQUIRED:
        raise GateBypassAttempt("credentials offered without a user gate")
    if not decision.offered or UserAgent(user) is UserAgent.ALWAYS_DENY:
        return FilledState(decision, approved=False)

    cred = decision.offered[0]
    user_field, pass_field = _login_fields(ctx)
    if isinstance(ctx.kind, NativeUi):
        return FilledState(
            decision,
            approved=True,
            credential_id=cred.id,
            native_values={user_field: cred.username, pass_field: cred.password},
        )

    ref = ctx.target
    user_key = FieldKey(ref.frames, ref.form, user_field)
    pass_key = FieldKey(ref.frames, ref.form, pass_field)
    if decision.fill_mode is FillMode.INTO_DOCUMENT:
        return FilledState(
            decision,
            approved=True,
            credential_id=cred.id,
            fill_state={user_key: cred.username, pass_key: cred.password},
        )
    nonce = (nonce_source or (lambda: secrets.token_hex(8)))()
    token = make_placeholder(cred.id, nonce)
    return FilledState(
        decision,
        approved=True,
        credential_id=cred.id,
        fill_state={user_key: cred.username, pass_key: token},
        substitution=Substitution(decision.action_origin, {token: cred.password}),
    )


@dataclass(frozen=True)
class Refusal:
    reason: CheckId | None
    detail: str


def complete_transmission(
    filled: FilledState, ctx: FillContext, document: Document | None = None
) -> OutboundRequest | Refusal:
    """Submit the filled form, swapping placeholders for secrets at the last moment."""
    if isinstance(ctx.kind, NativeUi):
        raise UnsupportedContext("native fills are delivered to the app, not transmitted")
    if not filled.approved:
        return Refusal(None, "nothing was filled")
    doc = document or ctx.document
    if filled.decision.fill_mode is FillMode.ON_TRANSMISSION:
        try:
            return submit_form(doc, ctx.target, filled.fill_state, filled.substitution)
        except MissingSubstitution as exc:
            return Refusal(CheckId.ACTION_DYNAMIC, str(exc))
    return submit_form(doc, ctx.target, filled.fill_state)


# --- whole ceremony ----------------------------------------------------------


@dataclass(frozen=True)
class CeremonyLog:
    context: FillContext
    decision: FillDecision
    filled: FilledState
    exfiltrations: tuple[Exfiltration, ...] = ()
    transmission: OutboundRequest | Refusal | None = None
    document: Document | None = None

    @property
    def request(self) -> OutboundRequest | None:
        return self.transmission if isinstance(self.transmission, OutboundRequest) else None


def run_ceremony(
    policy: PolicyId | str,
    manager: ManagerProfile | None,
    ctx: FillContext,
    scene: Scene,
    user: UserAgent | None = None,
    nonce_source: NonceSource | None = None,
) -> CeremonyLog:
    user = scene.user_agent if user is None else UserAgent(user)
    if isinstance(ctx.kind, NativeUi):
        decision = suggest(policy, manager, ctx, scene)
        filled = execute_fill(decision, user, ctx, scene, nonce_source)
        return CeremonyLog(ctx, decision, filled)

    webview = ctx.in_webview
    doc = ctx.document
    if webview and ctx.kind.host_scripts:
        doc = doc.with_scripts(ctx.target.frames, ctx.kind.host_scripts)
    exfil: list[Exfiltration] = []
    doc, out = run_script_phase(doc, ScriptPhase.ON_LOAD, {}, webview=webview)
    exfil += out
    ctx = ctx.with_document(doc)
    decision = suggest(policy, manager, ctx, scene)
    doc, out = run_script_phase(doc, ScriptPhase.PRE_FILL, {}, webview=webview)
    exfil += out
    filled = execute_fill(decision, user, ctx, scene, nonce_source)
    doc, out = run_script_phase(doc, ScriptPhase.POST_FILL, filled.fill_state, webview=webview)
    exfil += out
    transmission = complete_transmission(filled, ctx, doc) if filled.approved else None
    return CeremonyLog(ctx, decision, filled, tuple(exfil), transmission, doc)
