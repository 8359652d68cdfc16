import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autofill_sim.association import MappingScheme, SchemeKind, map_by_heuristic
from autofill_sim.attacks import (
    AttackKind,
    OutcomeKind,
    build_scenario,
    classify,
    run_attack,
    run_staggered,
    squat_generator,
)
from autofill_sim.errors import UnsquattableScheme
from autofill_sim.frameworks import (
    ALL_POLICIES,
    NativeUi,
    PolicyId,
    WebViewInApp,
    load_presets,
    preset,
    run_ceremony,
)
from autofill_sim.model import DomainName, UserAgent, Vault, fingerprint

VICTIMS = ["walmart.com", "paypal.com", "facebook.com", "ebay.com"]


class TestSquat:
    def test_literal_witnesses(self):
        assert squat_generator(SchemeKind.PREFIX, "walmart.com").package_id == "com.walmart.evil"
        assert squat_generator(SchemeKind.SUBSTRING, "walmart.com").package_id == "com.wal.evil"
        assert (
            squat_generator(SchemeKind.PACKAGE_INVERSION, "walmart.com").package_id
            == "com.walmart.evil"
        )

    @pytest.mark.parametrize(
        "scheme", [SchemeKind.PREFIX, SchemeKind.SUBSTRING, SchemeKind.PACKAGE_INVERSION]
    )
    @pytest.mark.parametrize("victim", VICTIMS)
    def test_squat_matches_victim(self, scheme, victim):
        app = squat_generator(scheme, victim)
        v = map_by_heuristic(MappingScheme(scheme), app, [DomainName.parse(victim)], Vault())
        assert v.accepted and DomainName.parse(victim) in v.matched_domains

    @pytest.mark.parametrize(
        "scheme",
        [
            SchemeKind.BIDIRECTIONAL,
            SchemeKind.STATIC_TABLE,
            SchemeKind.DAL_ONLY,
            SchemeKind.ALLOWLIST_WITH_FINGERPRINT,
        ],
    )
    def test_unsquattable(self, scheme):
        with pytest.raises(UnsquattableScheme):
            squat_generator(scheme, "walmart.com")


# --- an inspector written without reusing the classifier --------------------


def _site(domain):
    return ".".join(str(domain).split(".")[-2:])


def brute_force_stolen(log, scene):
    """Re-scan the raw ceremony log for real passwords at non-mapped destinations."""
    passwords = {c.password: c for c in scene.vault.credentials}
    sightings = []  # (destination-kind, destination, value)
    for value in log.filled.native_values.values():
        sightings.append(("app", log.context.kind.app, value))
    for ex in log.exfiltrations:
        for _, value in ex.values:
            if ex.channel is not None:
                sightings.append(("app", log.context.kind.host, value))
            else:
                sightings.append(("site", ex.destination.origin.domain, value))
    req = log.request
    if req is not None:
        params = {**req.body_params, **req.url_params}
        for value in params.values():
            sightings.append(("site", req.destination.origin.domain, value))
        source = scene.domains[req.destination.origin.domain].documents.get(req.destination.path)
        if req.url_params and isinstance(source, dict):
            for frame in source.get("frames", []):
                host = frame["src"].split("/")[2]
                for value in req.url_params.values():
                    sightings.append(("site", host, value))
    stolen = set()
    for kind, dest, value in sightings:
        for pw, cred in passwords.items():
            if pw not in value:
                continue
            if kind == "site":
                ok = _site(dest) == _site(cred.mapped_domain)
            else:
                ok = any(
                    str(a.package_id) == dest.package_id for a in scene.apps
                ) and _app_is_vouched(scene, dest, cred.mapped_domain)
            if not ok:
                stolen.add(cred.id)
    return stolen


def _app_is_vouched(scene, app, domain):
    entry = scene.domains.get(domain)
    if entry is None or domain not in app.entitled_domains or entry.cert_invalid_reason:
        return False
    dal = json.loads(entry.association_files.get("/.well-known/assetlinks.json", "[]"))
    for statement in dal:
        t = statement["target"]
        if (
            t["package_name"] == app.package_id
            and app.signing_fingerprint in t["sha256_cert_fingerprints"]
        ):
            return True
    aasa = json.loads(entry.association_files.get("/.well-known/apple-app-site-association", "{}"))
    for app_id in aasa.get("webcredentials", {}).get("apps", []):
        team, pkg = app_id.split(".", 1)
        if pkg == app.package_id and fingerprint(team) == app.signing_fingerprint:
            return True
    return False


def all_subjects():
    yield from ((p, None) for p in ALL_POLICIES)
    for policy, managers in load_presets().items():
        yield from ((policy, m) for m in managers.values())


@settings(max_examples=150, deadline=None)
@given(
    st.sampled_from(list(AttackKind)),
    st.sampled_from(list(all_subjects())),
    st.sampled_from(list(UserAgent)),
)
def test_classifier_agrees_with_brute_force(kind, subject, user):
    policy, manager = subject
    s = build_scenario(kind)
    log = run_ceremony(policy, manager, s.context, s.scene, user)
    outcome = classify(log, s)
    assert {t.credential_id for t in outcome.thefts} == brute_force_stolen(log, s.scene)
    assert outcome.stolen == (OutcomeKind.STOLEN in (outcome.result, outcome.then))


@pytest.mark.parametrize("kind", list(AttackKind))
@pytest.mark.parametrize("user", list(UserAgent))
def test_secure_model_never_loses_a_secret(kind, user):
    outcome = run_attack(kind, PolicyId.SECURE, None, user)
    assert not outcome.stolen
    assert OutcomeKind.STOLEN not in (outcome.result, outcome.then)


@pytest.mark.parametrize("kind", list(AttackKind))
def test_deny_never_loses_a_secret(kind):
    for policy in ALL_POLICIES:
        assert not run_attack(kind, policy, None, UserAgent.ALWAYS_DENY).stolen


@pytest.mark.parametrize(
    "kind, manager",
    [
        (AttackKind.PACKAGE_NAME_SQUAT_PREFIX, "safeincloud"),
        (AttackKind.PACKAGE_NAME_SQUAT_SUBSTRING, "bitwarden"),
        (AttackKind.PACKAGE_NAME_SQUAT_INVERSION, "avast"),
    ],
)
@pytest.mark.parametrize("victim", VICTIMS)
def test_squat_steals_under_matching_manager(kind, manager, victim):
    m = preset(PolicyId.ANDROID_SERVICE, manager)
    assert m.native_scheme.kind is kind.squat_scheme
    assert run_attack(kind, PolicyId.ANDROID_SERVICE, m, victim=victim).label == "UserGated→Stolen"


def test_malicious_page_steals_host_credential_by_both_routes():
    m = preset(PolicyId.ANDROID_SERVICE, "keeper")
    outcome = run_attack(AttackKind.WEBVIEW_MALICIOUS_PAGE, PolicyId.ANDROID_SERVICE, m)
    assert outcome.label == "UserGated→Stolen"
    assert {t.channel for t in outcome.thefts} == {"script", "request"}
    assert {t.credential_id for t in outcome.thefts} == {"victim"}


def test_malicious_app_captures_only_placeholder_under_secure_model():
    s = build_scenario(AttackKind.WEBVIEW_MALICIOUS_APP)
    assert isinstance(s.context.kind, WebViewInApp)
    log = run_ceremony(PolicyId.SECURE, None, s.context, s.scene, UserAgent.ALWAYS_APPROVE)
    (bridge,) = log.exfiltrations
    assert "pw-walmart-5be1" not in dict(bridge.values).values()
    assert classify(log, s).label == "Blocked(fill-on-transmission)"


def test_squat_scenarios_are_native():
    assert isinstance(build_scenario(AttackKind.PACKAGE_NAME_SQUAT_PREFIX).context.kind, NativeUi)


def test_staggered_runs_one_victim_at_a_time():
    out = run_staggered(AttackKind.CROSS_ORIGIN_IFRAME_PHISH, PolicyId.PASSWORD_AUTOFILL, VICTIMS)
    assert len(out) == len(VICTIMS)
    assert all(len(o.thefts) == 1 and o.then is OutcomeKind.STOLEN for o in out)
