"""Simplified web documents: login forms, frames, declarative scripts, submission.

Page JavaScript (and JavaScript a hosting app injects into a WebView) is
modelled as a list of `ScriptEvent`s that fire in three phases around the
autofill ceremony. See docs/html-subset.md for the accepted markup.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from html.parser import HTMLParser
from typing import Any, Callable, Mapping

from autofill_sim.errors import (
    BadFormIndex,
    HostScriptOutsideWebView,
    InvariantError,
    MissingSubstitution,
    ParseError,
    SceneReferenceError,
    SchemaError,
    UnsupportedTag,
)
from autofill_sim.model import (
    HTTP,
    HTTPS_VALID,
    Endpoint,
    Origin,
    Scene,
    split_url,
)

MAX_FRAME_DEPTH = 8

PLACEHOLDER_RE = re.compile(r"⟦PH:[^⟧]*⟧")


def make_placeholder(credential_id: str, nonce: str) -> str:
    return f"⟦PH:{credential_id}:{nonce}⟧"


class FieldKind(str, Enum):
    USERNAME = "username"
    PASSWORD = "password"
    TEXT = "text"
    OTHER = "other"


class Method(str, Enum):
    GET = "get"
    POST = "post"


class ScriptPhase(str, Enum):
    ON_LOAD = "on-load"
    PRE_FILL = "pre-fill"
    POST_FILL = "post-fill"


class InjectedBy(str, Enum):
    PAGE = "page"
    HOST_APP = "host-app"


@dataclass(frozen=True)
class Field:
    name: str
    kind: FieldKind
    visible: bool = True
    autocomplete_off: bool = False
    value: str | None = None
    input_type: str = "text"


@dataclass(frozen=True)
class Form:
    action: Endpoint
    method: Method
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        if not self.fields:
            raise InvariantError("a form needs at least one field")
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise InvariantError(f"duplicate field names in form: {names}")


@dataclass(frozen=True)
class RewriteAction:
    form: int
    target: Endpoint


@dataclass(frozen=True)
class ScrapeFields:
    form: int


@dataclass(frozen=True)
class ExfiltrateTo:
    destination: Endpoint


@dataclass(frozen=True)
class PostToBridge:
    channel: str


ScriptAction = RewriteAction | ScrapeFields | ExfiltrateTo | PostToBridge


@dataclass(frozen=True)
class ScriptEvent:
    phase: ScriptPhase
    action: ScriptAction
    injected_by: InjectedBy = InjectedBy.PAGE


@dataclass(frozen=True)
class Frame:
    endpoint: Endpoint
    visible: bool = True
    document: Document | None = None

    @property
    def origin(self) -> Origin:
        return self.endpoint.origin


@dataclass(frozen=True)
class Document:
    endpoint: Endpoint
    forms: tuple[Form, ...] = ()
    frames: tuple[Frame, ...] = ()
    scripts: tuple[ScriptEvent, ...] = ()

    @property
    def origin(self) -> Origin:
        return self.endpoint.origin

    def is_cross_origin(self, frame_index: int) -> bool:
        return not self.frames[frame_index].origin.same_origin(self.origin)

    def subdocument(self, frames: tuple[int, ...]) -> Document:
        doc = self
        for i in frames:
            try:
                child = doc.frames[i].document
            except IndexError:
                raise BadFormIndex(f"no frame {i} in {doc.endpoint}") from None
            if child is None:
                raise SceneReferenceError(f"frame {i} of {doc.endpoint} was not loaded")
            doc = child
        return doc

    def with_subdocument(self, frames: tuple[int, ...], new: Document) -> Document:
        if not frames:
            return new
        head, rest = frames[0], frames[1:]
        child = self.frames[head]
        updated = replace(child, document=child.document.with_subdocument(rest, new))
        return replace(self, frames=self.frames[:head] + (updated,) + self.frames[head + 1 :])

    def with_scripts(self, frames: tuple[int, ...], extra: tuple[ScriptEvent, ...]) -> Document:
        sub = self.subdocument(frames)
        return self.with_subdocument(frames, replace(sub, scripts=sub.scripts + extra))


@dataclass(frozen=True, order=True)
class FormRef:
    """A form addressed by the chain of frame indices leading to its document."""

    frames: tuple[int, ...]
    form: int


@dataclass(frozen=True, order=True)
class FieldKey:
    frames: tuple[int, ...]
    form: int
    name: str


FillState = Mapping[FieldKey, str]


@dataclass(frozen=True)
class Detection:
    ref: FormRef
    username_field: str
    password_field: str


@dataclass(frozen=True)
class Exfiltration:
    source: Origin
    phase: ScriptPhase
    injected_by: InjectedBy
    values: tuple[tuple[str, str], ...]
    destination: Endpoint | None = None
    channel: str | None = None


@dataclass(frozen=True)
class OutboundRequest:
    destination: Endpoint
    method: Method
    body_params: Mapping[str, str] = field(default_factory=dict)
    url_params: Mapping[str, str] = field(default_factory=dict)

    def all_values(self) -> list[str]:
        return list(self.body_params.values()) + list(self.url_params.values())


@dataclass(frozen=True)
class Substitution:
    """Placeholder → secret table, valid only for one destination origin."""

    issued_for: Origin
    tokens: Mapping[str, str] = field(repr=False)

    def __repr__(self) -> str:
        return f"Substitution(issued_for={self.issued_for}, tokens=<{len(self.tokens)} hidden>)"


# --- parsing -----------------------------------------------------------------

Resolver = Callable[[str], Endpoint]


def scheme_resolver(url: str) -> Endpoint:
    scheme, domain, path = split_url(url)
    return Endpoint(Origin(domain, HTTP if scheme == "http" else HTTPS_VALID), path)


_USERNAME_HINT = re.compile(r"user|login|email|account|id$", re.IGNORECASE)

_ALLOWED_ATTRS = {
    "form": {"action", "method"},
    "input": {"type", "name", "autocomplete", "hidden", "value"},
    "iframe": {"src", "hidden"},
    "script-event": {"phase", "do", "form", "url", "channel", "injected-by"},
}


def _field_kind(input_type: str, name: str, autocomplete: str | None) -> FieldKind:
    if input_type == "password":
        return FieldKind.PASSWORD
    if input_type == "email":
        return FieldKind.USERNAME
    if input_type in ("text", "tel"):
        if autocomplete == "username" or _USERNAME_HINT.search(name):
            return FieldKind.USERNAME
        return FieldKind.TEXT
    return FieldKind.OTHER


def _resolve(resolve: Resolver, base: Endpoint, url: str | None) -> Endpoint:
    if not url:
        return base
    if url.startswith("/"):
        return Endpoint(base.origin, url)
    return resolve(url)


class _SubsetParser(HTMLParser):
    def __init__(self, base: Endpoint, resolve: Resolver):
        super().__init__(convert_charrefs=True)
        self.base = base
        self.resolve = resolve
        self.forms: list[Form] = []
        self.frames: list[Frame] = []
        self.scripts: list[ScriptEvent] = []
        self._open_form: dict[str, Any] | None = None

    def _fail(self, message: str, cls: type[ParseError] = ParseError) -> None:
        line, col = self.getpos()
        raise cls(message, line, col + 1)

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        self.handle_starttag(tag, attrs)

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag not in _ALLOWED_ATTRS:
            self._fail(f"unsupported tag <{tag}>", UnsupportedTag)
        attr = {}
        for key, value in attrs:
            if key not in _ALLOWED_ATTRS[tag]:
                self._fail(f"unsupported attribute {key!r} on <{tag}>")
            attr[key] = value
        try:
            getattr(self, "_start_" + tag.replace("-", "_"))(attr)
        except (SchemaError, InvariantError) as exc:
            self._fail(str(exc))

    def handle_endtag(self, tag: str) -> None:
        if tag not in _ALLOWED_ATTRS:
            self._fail(f"unsupported tag </{tag}>", UnsupportedTag)
        if tag == "form":
            if self._open_form is None:
                self._fail("</form> without an open form")
            spec = self._open_form
            self._open_form = None
            if not spec["fields"]:
                self._fail("form has no input fields")
            try:
                self.forms.append(Form(spec["action"], spec["method"], tuple(spec["fields"])))
            except InvariantError as exc:
                self._fail(str(exc))

    def _start_form(self, attr: dict[str, str | None]) -> None:
        if self._open_form is not None:
            self._fail("nested <form>")
        method = (attr.get("method") or "get").lower()
        if method not in ("get", "post"):
            self._fail(f"unsupported form method {method!r}")
        self._open_form = {
            "action": _resolve(self.resolve, self.base, attr.get("action")),
            "method": Method(method),
            "fields": [],
        }

    def _start_input(self, attr: dict[str, str | None]) -> None:
        if self._open_form is None:
            self._fail("<input> outside of a <form>")
        name = attr.get("name")
        if not name:
            self._fail("<input> needs a name")
        input_type = (attr.get("type") or "text").lower()
        autocomplete = attr.get("autocomplete")
        self._open_form["fields"].append(
            Field(
                name=name,
                kind=_field_kind(input_type, name, autocomplete),
                visible="hidden" not in attr and input_type != "hidden",
                autocomplete_off=(autocomplete or "").lower() == "off",
                value=attr.get("value"),
                input_type=input_type,
            )
        )

    def _start_iframe(self, attr: dict[str, str | None]) -> None:
        src = attr.get("src")
        if not src:
            self._fail("<iframe> needs a src")
        self.frames.append(
            Frame(_resolve(self.resolve, self.base, src), visible="hidden" not in attr)
        )

    def _start_script_event(self, attr: dict[str, str | None]) -> None:
        spec = {k.replace("-", "_"): v for k, v in attr.items()}
        self.scripts.append(script_from_spec(spec, self.base, self.resolve))


def script_from_spec(spec: Mapping[str, Any], base: Endpoint, resolve: Resolver) -> ScriptEvent:
    try:
        phase = ScriptPhase(spec.get("phase"))
        injected_by = InjectedBy(spec.get("injected_by") or "page")
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    kind = spec.get("do")
    if kind == "rewrite-action":
        action: ScriptAction = RewriteAction(
            _form_index(spec), _resolve(resolve, base, _required(spec, "url"))
        )
    elif kind == "scrape":
        action = ScrapeFields(_form_index(spec))
    elif kind == "exfiltrate":
        action = ExfiltrateTo(_resolve(resolve, base, _required(spec, "url")))
    elif kind == "bridge":
        action = PostToBridge(_required(spec, "channel"))
    else:
        raise SchemaError(f"unknown script action {kind!r}")
    return ScriptEvent(phase, action, injected_by)


def _required(spec: Mapping[str, Any], key: str) -> Any:
    value = spec.get(key)
    if value in (None, ""):
        raise SchemaError(f"script event needs {key!r}")
    return value


def _form_index(spec: Mapping[str, Any]) -> int:
    raw = spec.get("form", 0)
    try:
        index = int(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"bad form index {raw!r}") from None
    if index < 0:
        raise SchemaError(f"bad form index {raw!r}")
    return index


def parse_document(
    source: str, origin: Origin, path: str = "/", resolve: Resolver = scheme_resolver
) -> Document:
    """Parse the HTML subset into a Document; frames are left unloaded."""
    base = Endpoint(origin, path)
    parser = _SubsetParser(base, resolve)
    parser.feed(source)
    parser.close()
    if parser._open_form is not None:
        parser._fail("unclosed <form>")
    return Document(base, tuple(parser.forms), tuple(parser.frames), tuple(parser.scripts))


def document_from_structure(
    data: Mapping[str, Any], origin: Origin, path: str = "/", resolve: Resolver = scheme_resolver
) -> Document:
    base = Endpoint(origin, path)
    forms = []
    for f in data.get("forms", []):
        fields = []
        for fd in f["fields"]:
            kind_text = fd["kind"]
            try:
                kind = FieldKind(kind_text)
                input_type = {"password": "password", "username": "text"}.get(kind_text, "text")
            except ValueError:
                kind, input_type = FieldKind.OTHER, kind_text
            fields.append(
                Field(
                    name=fd["name"],
                    kind=kind,
                    visible=fd.get("visible", True),
                    autocomplete_off=fd.get("autocomplete_off", False),
                    value=fd.get("value"),
                    input_type=input_type,
                )
            )
        forms.append(
            Form(
                _resolve(resolve, base, f.get("action")),
                Method(f.get("method", "get")),
                tuple(fields),
            )
        )
    frames = tuple(
        Frame(_resolve(resolve, base, fr["src"]), visible=fr.get("visible", True))
        for fr in data.get("frames", [])
    )
    scripts = tuple(script_from_spec(s, base, resolve) for s in data.get("scripts", []))
    return Document(base, tuple(forms), frames, scripts)


def load_document(scene: Scene, endpoint: Endpoint, _depth: int = 0) -> Document:
    """Build the document served at `endpoint`, loading nested frames from the scene."""
    if _depth > MAX_FRAME_DEPTH:
        raise InvariantError(f"frame nesting deeper than {MAX_FRAME_DEPTH} at {endpoint}")
    source = scene.document_source(endpoint)
    if source is None:
        raise SceneReferenceError(f"no document at {endpoint}")
    if isinstance(source, str):
        doc = parse_document(source, endpoint.origin, endpoint.path, scene.resolve_url)
    else:
        doc = document_from_structure(source, endpoint.origin, endpoint.path, scene.resolve_url)
    for form in doc.forms:
        if scene.entry(form.action.origin.domain) is None:
            raise SceneReferenceError(f"form action {form.action} is not a scene domain")
    frames = tuple(
        replace(fr, document=load_document(scene, fr.endpoint, _depth + 1)) for fr in doc.frames
    )
    return replace(doc, frames=frames)


# --- detection ---------------------------------------------------------------


def detect_login_form(doc: Document) -> list[tuple[int, Field, Field]]:
    """Login forms of this document (frames excluded) as (index, username, password)."""
    found = []
    for index, form in enumerate(doc.forms):
        passwords = [i for i, f in enumerate(form.fields) if f.kind is FieldKind.PASSWORD]
        if len(passwords) != 1:
            continue
        p = passwords[0]
        candidates = [
            i for i, f in enumerate(form.fields) if f.kind in (FieldKind.USERNAME, FieldKind.TEXT)
        ]
        if not candidates:
            continue
        before = [i for i in candidates if i < p]
        u = before[-1] if before else min(candidates)
        found.append((index, form.fields[u], form.fields[p]))
    return found


def detect_login_forms_deep(doc: Document, _prefix: tuple[int, ...] = ()) -> list[Detection]:
    """Login forms in the document and every loaded frame, depth first."""
    out = [Detection(FormRef(_prefix, i), u.name, p.name) for i, u, p in detect_login_form(doc)]
    for n, frame in enumerate(doc.frames):
        if frame.document is not None:
            out.extend(detect_login_forms_deep(frame.document, _prefix + (n,)))
    return out


# --- scripts -----------------------------------------------------------------


def form_values(doc: Document, ref: FormRef, fill_state: FillState) -> list[tuple[str, str]]:
    """Values a script on the page would currently read from a form."""
    sub = doc.subdocument(ref.frames)
    if not 0 <= ref.form < len(sub.forms):
        raise BadFormIndex(f"no form {ref.form} in {sub.endpoint}")
    values = []
    for f in sub.forms[ref.form].fields:
        value = fill_state.get(FieldKey(ref.frames, ref.form, f.name), f.value)
        if value is not None:
            values.append((f.name, value))
    return values


def visible_state(doc: Document, fill_state: FillState) -> list[str]:
    """Every field value readable from any document in the frame tree."""
    out = [v for v in fill_state.values() if v is not None]

    def walk(d: Document) -> None:
        for form in d.forms:
            out.extend(f.value for f in form.fields if f.value is not None)
        for fr in d.frames:
            if fr.document is not None:
                walk(fr.document)

    walk(doc)
    return out


def run_script_phase(
    doc: Document, phase: ScriptPhase, fill_state: FillState, *, webview: bool = False
) -> tuple[Document, list[Exfiltration]]:
    """Fire every script event of `phase` in the frame tree, in document order."""
    exfiltrations: list[Exfiltration] = []
    doc = _run_phase(doc, (), phase, fill_state, webview, exfiltrations)
    return doc, exfiltrations


def _run_phase(
    root: Document,
    prefix: tuple[int, ...],
    phase: ScriptPhase,
    fill_state: FillState,
    webview: bool,
    out: list[Exfiltration],
) -> Document:
    sub = root.subdocument(prefix)
    scraped: list[tuple[str, str]] = []
    for event in sub.scripts:
        if event.injected_by is InjectedBy.HOST_APP and not webview:
            raise HostScriptOutsideWebView(f"host-app script in {sub.endpoint} outside a WebView")
        if event.phase is not phase:
            continue
        action = event.action
        if isinstance(action, RewriteAction):
            if not 0 <= action.form < len(sub.forms):
                raise BadFormIndex(f"no form {action.form} in {sub.endpoint}")
            forms = list(sub.forms)
            forms[action.form] = replace(forms[action.form], action=action.target)
            sub = replace(sub, forms=tuple(forms))
            root = root.with_subdocument(prefix, sub)
        elif isinstance(action, ScrapeFields):
            scraped = form_values(root, FormRef(prefix, action.form), fill_state)
        elif isinstance(action, ExfiltrateTo):
            out.append(
                Exfiltration(
                    sub.origin, phase, event.injected_by, tuple(scraped), action.destination
                )
            )
        elif isinstance(action, PostToBridge):
            # a plain browser tab has no native bridge to post to
            if webview:
                out.append(
                    Exfiltration(
                        sub.origin, phase, event.injected_by, tuple(scraped), channel=action.channel
                    )
                )
    for n, frame in enumerate(sub.frames):
        if frame.document is not None:
            root = _run_phase(root, prefix + (n,), phase, fill_state, webview, out)
    return root


# --- submission --------------------------------------------------------------


def submit_form(
    doc: Document,
    ref: FormRef,
    fill_state: FillState,
    substitution: Substitution | None = None,
) -> OutboundRequest:
    """Serialize a form into the request the browser would send."""
    sub = doc.subdocument(ref.frames)
    if not 0 <= ref.form < len(sub.forms):
        raise BadFormIndex(f"no form {ref.form} in {sub.endpoint}")
    form = sub.forms[ref.form]
    values = dict(form_values(doc, ref, fill_state))
    if substitution is not None:
        if not form.action.origin.same_origin(substitution.issued_for):
            raise MissingSubstitution(
                f"substitutions were issued for {substitution.issued_for}, "
                f"form now posts to {form.action.origin}"
            )
        values = {k: _substitute(v, substitution) for k, v in values.items()}
    if form.method is Method.GET:
        return OutboundRequest(form.action, form.method, url_params=values)
    return OutboundRequest(form.action, form.method, body_params=values)


def _substitute(value: str, substitution: Substitution) -> str:
    def swap(match: re.Match[str]) -> str:
        token = match.group(0)
        if token not in substitution.tokens:
            raise MissingSubstitution("placeholder has no substitution entry")
        return substitution.tokens[token]

    return PLACEHOLDER_RE.sub(swap, value)
