"""App-to-domain association: site association files, bidirectional
verification, and the mapping heuristics individual password managers use.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from autofill_sim.errors import BadFingerprint, SchemaError
from autofill_sim.model import (
    APPLE_ASSOCIATION_PATH,
    DAL_ASSOCIATION_PATH,
    DEFAULT_PUBLIC_SUFFIXES,
    AppIdentity,
    ConnectionSecurity,
    DomainName,
    Scene,
    Vault,
    fingerprint,
)

DAL_LOGIN_RELATION = "delegate_permission/common.get_login_creds"

# package components that say nothing about the owner
COMMON_COMPONENTS = frozenset({"com", "android", "app"})

_HEX_RE = re.compile(r"^[0-9a-f]*$")


class Platform(str, Enum):
    APPLE = "apple"
    DAL = "dal"

    @property
    def well_known_path(self) -> str:
        return APPLE_ASSOCIATION_PATH if self is Platform.APPLE else DAL_ASSOCIATION_PATH


def platform_for_path(path: str) -> Platform:
    for platform in Platform:
        if platform.well_known_path == path:
            return platform
    raise SchemaError(f"{path!r} is not a well-known association file path")


@dataclass(frozen=True)
class AssociationEntry:
    package_id: str
    fingerprints: tuple[str, ...]


@dataclass(frozen=True)
class SiteAssociationFile:
    platform: Platform
    entries: tuple[AssociationEntry, ...] = ()

    def lookup(self, package_id: str) -> AssociationEntry | None:
        for entry in self.entries:
            if entry.package_id == package_id:
                return entry
        return None


def normalize_fingerprint(text: str) -> str:
    if not isinstance(text, str):
        raise BadFingerprint(f"fingerprint must be a string, got {type(text).__name__}")
    hexed = text.replace(":", "").strip().lower()
    if not _HEX_RE.match(hexed):
        raise BadFingerprint(f"non-hex characters in fingerprint {text!r}")
    if len(hexed) % 2:
        raise BadFingerprint(f"odd hex length in fingerprint {text!r}")
    if len(hexed) != 64:
        raise BadFingerprint(f"fingerprint {text!r} is not a SHA-256 digest")
    return hexed


def _apple_entries(data: Any) -> list[tuple[str, str]]:
    if not isinstance(data, dict):
        raise SchemaError("apple-app-site-association must be a JSON object")
    app_ids: list[str] = []
    creds = data.get("webcredentials")
    if creds is not None:
        if not isinstance(creds, dict) or not isinstance(creds.get("apps", []), list):
            raise SchemaError("webcredentials.apps must be a list")
        app_ids.extend(creds.get("apps", []))
    links = data.get("applinks")
    if links is not None:
        if not isinstance(links, dict) or not isinstance(links.get("details", []), list):
            raise SchemaError("applinks.details must be a list")
        for detail in links.get("details", []):
            if not isinstance(detail, dict):
                raise SchemaError("applinks.details entries must be objects")
            if "appID" in detail:
                app_ids.append(detail["appID"])
            app_ids.extend(detail.get("appIDs", []))
    if creds is None and links is None:
        raise SchemaError("apple-app-site-association has neither webcredentials nor applinks")

    out = []
    for app_id in app_ids:
        if not isinstance(app_id, str) or "." not in app_id:
            raise SchemaError(f"appID {app_id!r} is not TEAMID.package")
        team, package = app_id.split(".", 1)
        if not team or not package:
            raise SchemaError(f"appID {app_id!r} is not TEAMID.package")
        # team id doubles as the signing-key label unless it already is a digest
        fp = team.lower() if re.fullmatch(r"[0-9a-fA-F]{64}", team) else fingerprint(team)
        out.append((package, fp))
    return out


def _dal_entries(data: Any) -> list[tuple[str, tuple[str, ...]]]:
    if not isinstance(data, list):
        raise SchemaError("assetlinks.json must be a JSON array of statements")
    out = []
    for statement in data:
        if not isinstance(statement, dict):
            raise SchemaError("DAL statements must be objects")
        relation = statement.get("relation", [])
        target = statement.get("target")
        if not isinstance(relation, list) or not isinstance(target, dict):
            raise SchemaError("DAL statement needs a relation list and a target object")
        if target.get("namespace") != "android_app" or DAL_LOGIN_RELATION not in relation:
            continue
        package = target.get("package_name")
        fps = target.get("sha256_cert_fingerprints")
        if not isinstance(package, str) or not isinstance(fps, list) or not fps:
            raise SchemaError("android_app target needs package_name and sha256_cert_fingerprints")
        out.append((package, tuple(normalize_fingerprint(fp) for fp in fps)))
    return out


def parse_association_file(platform: Platform, text: str) -> SiteAssociationFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"association file is not JSON: {exc}") from None
    if platform is Platform.APPLE:
        pairs = [(p, (fp,)) for p, fp in _apple_entries(data)]
    else:
        pairs = _dal_entries(data)
    seen: set[str] = set()
    entries = []
    for package, fps in pairs:
        if package in seen:
            raise SchemaError(f"package {package!r} listed twice")
        seen.add(package)
        entries.append(AssociationEntry(package, fps))
    return SiteAssociationFile(platform, tuple(entries))


def association_file_for(
    scene: Scene, domain: DomainName, platform: Platform
) -> tuple[SiteAssociationFile | None, ConnectionSecurity]:
    """Fetch a domain's association file from the scene, with the transport it came over."""
    security = scene.security_of(domain, "https")
    entry = scene.entry(domain)
    if entry is None:
        return None, security
    text = entry.association_files.get(platform.well_known_path)
    if text is None:
        return None, security
    return parse_association_file(platform, text), security


# --- verdicts ----------------------------------------------------------------


class Decision(str, Enum):
    VERIFIED = "verified"
    NOT_VERIFIED = "not-verified"
    USER_CONFIRM_REQUIRED = "user-confirm-required"


@dataclass(frozen=True)
class MappingVerdict:
    decision: Decision
    matched_domains: tuple[DomainName, ...] = ()
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.decision is Decision.VERIFIED and not self.matched_domains:
            raise ValueError("a verified mapping must name at least one domain")

    @property
    def accepted(self) -> bool:
        return self.decision is not Decision.NOT_VERIFIED


def not_verified(*reasons: str) -> MappingVerdict:
    return MappingVerdict(Decision.NOT_VERIFIED, (), tuple(reasons))


def verify_bidirectional(
    app: AppIdentity,
    domain: DomainName,
    assoc: SiteAssociationFile | None,
    fetched_over: ConnectionSecurity,
) -> MappingVerdict:
    """Accept the app for the domain only when both sides vouch for each other."""
    reasons = []
    if domain not in app.entitled_domains:
        reasons.append("app-not-entitled")
    entry = assoc.lookup(app.package_id) if assoc is not None else None
    if entry is None:
        reasons.append("app-not-listed-by-domain")
    elif app.signing_fingerprint not in entry.fingerprints:
        reasons.append("fingerprint-mismatch")
    if not fetched_over.authenticated:
        reasons.append("association-not-authenticated")
    if reasons:
        return not_verified(*reasons)
    return MappingVerdict(Decision.VERIFIED, (domain,))


def verify_in_scene(
    scene: Scene, app: AppIdentity, domain: DomainName, platform: Platform = Platform.APPLE
) -> MappingVerdict:
    assoc, security = association_file_for(scene, domain, platform)
    return verify_bidirectional(app, domain, assoc, security)


# --- manager heuristics ------------------------------------------------------


class SchemeKind(str, Enum):
    BIDIRECTIONAL = "bidirectional"
    STATIC_TABLE = "static-table"
    PACKAGE_INVERSION = "package-inversion"
    SUBSTRING = "substring"
    PREFIX = "prefix"
    DAL_ONLY = "dal-only"
    DEV_WEBSITE = "dev-website"
    MANUAL = "manual"
    ALLOWLIST_WITH_FINGERPRINT = "allowlist-with-fingerprint"


@dataclass(frozen=True)
class MappingScheme:
    """A mapping scheme and its preset data.

    `table` means, per kind: StaticTable package→domain; PackageInversion
    inverted-domain list (keys) plus `alternate` package→domain overrides;
    AllowlistWithFingerprint "package fingerprint"→domain.
    """

    kind: SchemeKind
    table: Mapping[str, str] = field(default_factory=dict)
    alternate: Mapping[str, str] = field(default_factory=dict)

    def table_range(self) -> set[DomainName]:
        values = list(self.alternate.values())
        if self.kind is SchemeKind.PACKAGE_INVERSION:
            values += list(self.table.keys())
        else:
            values += list(self.table.values())
        return {DomainName.parse(v) for v in values}


def invert_prefix(package_id: str) -> DomainName | None:
    parts = package_id.split(".")
    try:
        return DomainName((parts[1], parts[0]))
    except Exception:
        return None


def substring_components(
    package_id: str, suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES
) -> list[str]:
    skip = set(COMMON_COMPONENTS) | {s for s in suffixes if "." not in s}
    return [c for c in package_id.split(".") if c and c not in skip]


def _site_matches(
    candidate: DomainName, known: Iterable[DomainName], suffixes: Iterable[str]
) -> list[DomainName]:
    suffixes = tuple(suffixes)
    return [d for d in known if d.same_site(candidate, suffixes)]


def map_by_heuristic(
    scheme: MappingScheme,
    app: AppIdentity,
    known_domains: Iterable[DomainName],
    vault: Vault,
    *,
    association_files: Mapping[DomainName, SiteAssociationFile] | None = None,
    suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES,
) -> MappingVerdict:
    """Decide which domains a manager maps `app` to under `scheme`."""
    known = sorted(set(known_domains))
    suffixes = tuple(suffixes)
    kind = scheme.kind
    pkg = app.package_id

    if kind is SchemeKind.BIDIRECTIONAL:
        raise ValueError("bidirectional mapping goes through verify_bidirectional")

    if kind is SchemeKind.STATIC_TABLE:
        if pkg not in scheme.table:
            return not_verified("not-in-table")
        return MappingVerdict(Decision.VERIFIED, (DomainName.parse(scheme.table[pkg]),))

    if kind is SchemeKind.ALLOWLIST_WITH_FINGERPRINT:
        key = f"{pkg} {app.signing_fingerprint}"
        if key not in scheme.table:
            return not_verified("not-in-allowlist")
        return MappingVerdict(Decision.VERIFIED, (DomainName.parse(scheme.table[key]),))

    if kind is SchemeKind.PACKAGE_INVERSION:
        # alternate_mapping wins over the inversion table
        if pkg in scheme.alternate:
            return MappingVerdict(Decision.VERIFIED, (DomainName.parse(scheme.alternate[pkg]),))
        inverted = invert_prefix(pkg)
        if inverted is None:
            return not_verified("no-match")
        hits = _site_matches(inverted, known, suffixes)
        if not hits and str(inverted) in scheme.table:
            hits = [inverted]
        if not hits:
            return not_verified("no-match")
        return MappingVerdict(Decision.VERIFIED, tuple(hits))

    if kind is SchemeKind.PREFIX:
        inverted = invert_prefix(pkg)
        hits = _site_matches(inverted, known, suffixes) if inverted else []
        if not hits:
            return not_verified("no-match")
        return MappingVerdict(Decision.VERIFIED, tuple(hits))

    if kind is SchemeKind.SUBSTRING:
        parts = substring_components(pkg, suffixes)
        hits = [d for d in known if any(p in str(d) for p in parts)]
        if not hits:
            return not_verified("no-match")
        return MappingVerdict(Decision.VERIFIED, tuple(hits))

    if kind is SchemeKind.DAL_ONLY:
        files = association_files or {}
        hits = []
        for d in known:
            assoc = files.get(d)
            entry = assoc.lookup(pkg) if assoc is not None else None
            if entry is not None and app.signing_fingerprint in entry.fingerprints:
                hits.append(d)
        if not hits:
            return not_verified("not-in-dal")
        return MappingVerdict(Decision.VERIFIED, tuple(hits))

    if kind is SchemeKind.DEV_WEBSITE:
        if app.developer_website is not None:
            return MappingVerdict(
                Decision.USER_CONFIRM_REQUIRED,
                (app.developer_website,),
                ("unverified-developer-website",),
            )
        return _manual(pkg, known, vault)

    if kind is SchemeKind.MANUAL:
        return _manual(pkg, known, vault)

    raise ValueError(f"unhandled scheme {kind}")


def _manual(pkg: str, known: list[DomainName], vault: Vault) -> MappingVerdict:
    mapped = [d for p, d in vault.manual_app_mappings if p == pkg]
    if mapped:
        return MappingVerdict(Decision.VERIFIED, tuple(sorted(set(mapped))))
    # the user is asked to pick any stored domain for the app
    return MappingVerdict(Decision.USER_CONFIRM_REQUIRED, tuple(known), ("manual-association",))


def dal_files_in_scene(scene: Scene) -> dict[DomainName, SiteAssociationFile]:
    """DAL files the scene's domains serve over an authenticated connection."""
    files = {}
    for domain in scene.domains:
        assoc, security = association_file_for(scene, domain, Platform.DAL)
        if assoc is not None and security.authenticated:
            files[domain] = assoc
    return files
