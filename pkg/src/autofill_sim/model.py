"""Core domain types and the scene file format.

A scene is the whole simulated world: the user's vault, installed apps, the
domains those apps and pages talk to, and the documents each domain serves.
Everything here is immutable once constructed.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping
from urllib.parse import urlsplit

import jsonschema

from autofill_sim.errors import (
    EmptyLabel,
    InvariantError,
    SceneReferenceError,
    SchemaError,
)

DEFAULT_PUBLIC_SUFFIXES: frozenset[str] = frozenset(
    {"com", "org", "net", "edu", "gov", "io", "app", "dev", "co.uk", "org.uk", "ac.uk"}
)

APPLE_ASSOCIATION_PATH = "/.well-known/apple-app-site-association"
DAL_ASSOCIATION_PATH = "/.well-known/assetlinks.json"

_LABEL_RE = re.compile(r"^[a-z0-9-]+$")
_PACKAGE_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)+$")
_FINGERPRINT_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True, order=True)
class DomainName:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise InvariantError("domain name has no labels")
        for label in self.labels:
            if not _LABEL_RE.match(label):
                raise InvariantError(f"bad DNS label {label!r}")

    @classmethod
    def parse(cls, text: str) -> DomainName:
        if not isinstance(text, str) or not text.strip(".").strip():
            raise InvariantError(f"bad domain name {text!r}")
        return cls(tuple(text.strip().strip(".").lower().split(".")))

    def __str__(self) -> str:
        return ".".join(self.labels)

    def public_suffix(self, suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES) -> str:
        known = set(suffixes)
        # longest matching suffix wins; an unknown TLD acts as its own suffix
        for start in range(len(self.labels)):
            candidate = ".".join(self.labels[start:])
            if candidate in known:
                return candidate
        return self.labels[-1]

    def registrable(self, suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES) -> DomainName:
        suffix = self.public_suffix(suffixes)
        n = len(suffix.split(".")) + 1
        if len(self.labels) < n:
            return self
        return DomainName(self.labels[-n:])

    def same_site(
        self, other: DomainName, suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES
    ) -> bool:
        suffixes = tuple(suffixes)
        return self.registrable(suffixes) == other.registrable(suffixes)


class SecurityKind(str, Enum):
    HTTPS_VALID = "https-valid"
    HTTPS_INVALID_CERT = "https-invalid-cert"
    HTTP = "http"


@dataclass(frozen=True)
class ConnectionSecurity:
    kind: SecurityKind
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.kind is SecurityKind.HTTPS_INVALID_CERT:
            if not self.reason:
                raise InvariantError("an invalid certificate needs a reason")
        elif self.reason is not None:
            raise InvariantError(f"{self.kind.value} carries no reason")

    @property
    def authenticated(self) -> bool:
        return self.kind is SecurityKind.HTTPS_VALID

    @property
    def scheme(self) -> str:
        return "http" if self.kind is SecurityKind.HTTP else "https"


HTTPS_VALID = ConnectionSecurity(SecurityKind.HTTPS_VALID)
HTTP = ConnectionSecurity(SecurityKind.HTTP)


def invalid_cert(reason: str) -> ConnectionSecurity:
    return ConnectionSecurity(SecurityKind.HTTPS_INVALID_CERT, reason)


@dataclass(frozen=True)
class Origin:
    domain: DomainName
    security: ConnectionSecurity = HTTPS_VALID

    def same_origin(self, other: Origin) -> bool:
        # certificate state is part of the origin: a bad-cert page is not the real site
        return self.domain == other.domain and self.security.kind is other.security.kind

    def __str__(self) -> str:
        return f"{self.security.scheme}://{self.domain}"


@dataclass(frozen=True)
class Endpoint:
    """An origin plus a path, e.g. a form action or a request target."""

    origin: Origin
    path: str = "/"

    def __str__(self) -> str:
        return f"{self.origin}{self.path}"


@dataclass(frozen=True)
class Credential:
    id: str
    username: str
    password: str = field(repr=False)
    mapped_domain: DomainName

    def __repr__(self) -> str:
        return (
            f"Credential(id={self.id!r}, username={self.username!r}, "
            f"password='***', mapped_domain={str(self.mapped_domain)!r})"
        )

    __str__ = __repr__


@dataclass(frozen=True)
class Vault:
    credentials: tuple[Credential, ...] = ()
    manual_app_mappings: tuple[tuple[str, DomainName], ...] = ()

    def __post_init__(self) -> None:
        ids = [c.id for c in self.credentials]
        if len(ids) != len(set(ids)):
            raise InvariantError("credential ids must be unique within a vault")

    def secrets(self) -> dict[str, str]:
        """Map every password in the vault to its credential id."""
        return {c.password: c.id for c in self.credentials if c.password}

    def get(self, credential_id: str) -> Credential:
        for cred in self.credentials:
            if cred.id == credential_id:
                return cred
        raise KeyError(credential_id)

    def domains(self) -> tuple[DomainName, ...]:
        return tuple(sorted({c.mapped_domain for c in self.credentials}))


@dataclass(frozen=True)
class AppIdentity:
    package_id: str
    signing_fingerprint: str
    entitled_domains: tuple[DomainName, ...] = ()
    developer_website: DomainName | None = None

    def __post_init__(self) -> None:
        if not _PACKAGE_RE.match(self.package_id):
            raise InvariantError(f"bad package id {self.package_id!r}")
        if not _FINGERPRINT_RE.match(self.signing_fingerprint):
            raise InvariantError(
                f"fingerprint for {self.package_id} must be 64 lowercase hex chars"
            )

    def __str__(self) -> str:
        return f"app:{self.package_id}"


class UserAgent(str, Enum):
    ALWAYS_APPROVE = "always-approve"
    ALWAYS_DENY = "always-deny"


DocumentSource = str | Mapping[str, Any]


@dataclass(frozen=True)
class DomainEntry:
    documents: Mapping[str, DocumentSource] = field(default_factory=dict)
    association_files: Mapping[str, str] = field(default_factory=dict)
    cert_invalid_reason: str | None = None


@dataclass(frozen=True)
class Scene:
    vault: Vault = field(default_factory=Vault)
    apps: tuple[AppIdentity, ...] = ()
    domains: Mapping[DomainName, DomainEntry] = field(default_factory=dict)
    user_agent: UserAgent = UserAgent.ALWAYS_APPROVE
    public_suffixes: tuple[str, ...] | None = None

    @property
    def suffixes(self) -> frozenset[str]:
        if self.public_suffixes is None:
            return DEFAULT_PUBLIC_SUFFIXES
        return frozenset(self.public_suffixes)

    def app(self, package_id: str) -> AppIdentity:
        for app in self.apps:
            if app.package_id == package_id:
                return app
        raise SceneReferenceError(f"no app {package_id!r} in scene")

    def entry(self, domain: DomainName) -> DomainEntry | None:
        return self.domains.get(domain)

    def security_of(self, domain: DomainName, scheme: str) -> ConnectionSecurity:
        """Connection security a client sees when contacting `domain` over `scheme`."""
        if scheme == "http":
            return HTTP
        entry = self.entry(domain)
        if entry is not None and entry.cert_invalid_reason is not None:
            return invalid_cert(entry.cert_invalid_reason)
        return HTTPS_VALID

    def resolve_url(self, url: str) -> Endpoint:
        scheme, domain, path = split_url(url)
        return Endpoint(Origin(domain, self.security_of(domain, scheme)), path)

    def document_source(self, endpoint: Endpoint) -> DocumentSource | None:
        entry = self.entry(endpoint.origin.domain)
        if entry is None:
            return None
        return entry.documents.get(endpoint.path)


def split_url(url: str) -> tuple[str, DomainName, str]:
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        raise SchemaError(f"not an absolute http(s) URL: {url!r}")
    return parts.scheme, DomainName.parse(parts.hostname), parts.path or "/"


def fingerprint(signing_key_label: str) -> str:
    """Simulated code-signing fingerprint: SHA-256 of the key label."""
    if not signing_key_label:
        raise EmptyLabel("signing key label must be non-empty")
    return hashlib.sha256(signing_key_label.encode("utf-8")).hexdigest()


def credentials_for_domain(
    vault: Vault, origin: Origin, suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES
) -> list[Credential]:
    """Credentials mapped to the origin's site; connection security is not consulted."""
    suffixes = tuple(suffixes)
    site = origin.domain.registrable(suffixes)
    hits = [c for c in vault.credentials if c.mapped_domain.registrable(suffixes) == site]
    return sorted(hits, key=lambda c: c.id)


# --- scene file format -------------------------------------------------------


@lru_cache(maxsize=1)
def scene_schema() -> dict[str, Any]:
    text = resources.files("autofill_sim").joinpath("data/scene-schema-v1.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=1)
def _scene_validator() -> jsonschema.protocols.Validator:
    schema = scene_schema()
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls(schema)


def _domain(text: str, where: str) -> DomainName:
    try:
        return DomainName.parse(text)
    except InvariantError as exc:
        raise InvariantError(f"{where}: {exc}") from None


def scene_from_dict(data: Any) -> Scene:
    error = jsonschema.exceptions.best_match(_scene_validator().iter_errors(data))
    if error is not None:
        path = "/".join(str(p) for p in error.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {error.message}")

    vault_data = data["vault"]
    creds = tuple(
        Credential(
            id=c["id"],
            username=c["username"],
            password=c["password"],
            mapped_domain=_domain(c["domain"], f"credential {c['id']}"),
        )
        for c in vault_data["credentials"]
    )
    manual = tuple(
        (m["package_id"], _domain(m["domain"], "manual mapping"))
        for m in vault_data.get("manual_app_mappings", [])
    )
    vault = Vault(creds, manual)

    apps = []
    for a in data["apps"]:
        fp = a.get("signing_fingerprint")
        if fp is None:
            fp = fingerprint(a["signing_key"])
        apps.append(
            AppIdentity(
                package_id=a["package_id"],
                signing_fingerprint=fp,
                entitled_domains=tuple(
                    _domain(d, a["package_id"]) for d in a.get("entitled_domains", [])
                ),
                developer_website=(
                    _domain(a["developer_website"], a["package_id"])
                    if a.get("developer_website")
                    else None
                ),
            )
        )
    package_ids = [a.package_id for a in apps]
    if len(package_ids) != len(set(package_ids)):
        raise InvariantError("package ids must be unique within a scene")

    domains: dict[DomainName, DomainEntry] = {}
    for name, entry in data["domains"].items():
        dn = _domain(name, "domains")
        if dn in domains:
            raise InvariantError(f"domain {dn} declared twice")
        cert = entry.get("certificate")
        reason = None
        if cert is not None and not cert["valid"]:
            reason = cert.get("reason") or "invalid certificate"
        domains[dn] = DomainEntry(
            documents=dict(entry.get("documents", {})),
            association_files=dict(entry.get("association_files", {})),
            cert_invalid_reason=reason,
        )

    suffixes = data.get("public_suffixes")
    scene = Scene(
        vault=vault,
        apps=tuple(apps),
        domains=domains,
        user_agent=UserAgent(data["user_agent"]),
        public_suffixes=tuple(suffixes) if suffixes is not None else None,
    )
    validate_scene(scene)
    return scene


def validate_scene(scene: Scene) -> None:
    """Cross-reference checks that need the whole scene."""
    known = {a.package_id for a in scene.apps}
    for package_id, _ in scene.vault.manual_app_mappings:
        if package_id not in known:
            raise SceneReferenceError(f"manual mapping names unknown app {package_id!r}")

    # documents are parsed here so a scene never loads with a broken page
    from autofill_sim import association, webdoc

    for domain, entry in scene.domains.items():
        for path, text in entry.association_files.items():
            platform = association.platform_for_path(path)
            association.parse_association_file(platform, text)
        for path in entry.documents:
            webdoc.load_document(
                scene, Endpoint(Origin(domain, scene.security_of(domain, "https")), path)
            )


def load_scene(source: str) -> Scene:
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scene is not valid JSON: {exc}") from None
    return scene_from_dict(data)


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    vault: dict[str, Any] = {
        "credentials": [
            {
                "id": c.id,
                "username": c.username,
                "password": c.password,
                "domain": str(c.mapped_domain),
            }
            for c in scene.vault.credentials
        ]
    }
    if scene.vault.manual_app_mappings:
        vault["manual_app_mappings"] = [
            {"package_id": p, "domain": str(d)} for p, d in scene.vault.manual_app_mappings
        ]
    apps = []
    for a in scene.apps:
        item: dict[str, Any] = {
            "package_id": a.package_id,
            "signing_fingerprint": a.signing_fingerprint,
            "entitled_domains": [str(d) for d in a.entitled_domains],
        }
        if a.developer_website is not None:
            item["developer_website"] = str(a.developer_website)
        apps.append(item)
    domains: dict[str, Any] = {}
    for dn, entry in scene.domains.items():
        item = {"documents": dict(entry.documents)}
        if entry.association_files:
            item["association_files"] = dict(entry.association_files)
        if entry.cert_invalid_reason is not None:
            item["certificate"] = {"valid": False, "reason": entry.cert_invalid_reason}
        domains[str(dn)] = item
    out: dict[str, Any] = {
        "vault": vault,
        "apps": apps,
        "domains": domains,
        "user_agent": scene.user_agent.value,
    }
    if scene.public_suffixes is not None:
        out["public_suffixes"] = list(scene.public_suffixes)
    return out


def render_scene(scene: Scene) -> str:
    """Serialize a scene to scene-schema v1 text (this includes vault secrets)."""
    return json.dumps(scene_to_dict(scene), indent=2, ensure_ascii=False)
