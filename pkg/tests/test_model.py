import hashlib

import pytest
from conftest import make_scene
from hypothesis import given
from hypothesis import strategies as st

from autofill_sim.errors import (
    EmptyLabel,
    InvariantError,
    SceneReferenceError,
    SchemaError,
)
from autofill_sim.model import (
    HTTP,
    HTTPS_VALID,
    AppIdentity,
    Credential,
    DomainName,
    Origin,
    SecurityKind,
    Vault,
    credentials_for_domain,
    fingerprint,
    load_scene,
    render_scene,
    scene_from_dict,
    scene_to_dict,
)


def test_fingerprint_matches_independent_sha256():
    # computed outside Python with `printf keyA | sha256sum`
    assert fingerprint("keyA") == "8a197f6f60e55bf203457b7e3a0f7aad287a1740cc672d01f2c588770a2c6a2b"
    assert fingerprint("keyA") == hashlib.sha256(b"keyA").hexdigest()
    assert fingerprint("keyA") != fingerprint("keyB")


def test_fingerprint_rejects_empty_label():
    with pytest.raises(EmptyLabel):
        fingerprint("")


@pytest.mark.parametrize(
    "host, site",
    [
        ("walmart.com", "walmart.com"),
        ("www.walmart.com", "walmart.com"),
        ("a.b.bbc.co.uk", "bbc.co.uk"),
        ("localhost", "localhost"),
        ("Shop.Example.ORG.", "example.org"),
    ],
)
def test_registrable_domain(host, site):
    assert str(DomainName.parse(host).registrable()) == site


@pytest.mark.parametrize("bad", ["", ".", "exa mple.com", "bad_label.com"])
def test_domain_name_rejects_garbage(bad):
    with pytest.raises(InvariantError):
        DomainName.parse(bad)


def test_same_origin_distinguishes_scheme():
    d = DomainName.parse("walmart.com")
    assert Origin(d, HTTPS_VALID).same_origin(Origin(d, HTTPS_VALID))
    assert not Origin(d, HTTPS_VALID).same_origin(Origin(d, HTTP))


def test_credential_repr_masks_password():
    c = Credential("x", "alice", "s3cret-value", DomainName.parse("a.com"))
    assert "s3cret-value" not in repr(c)
    assert "s3cret-value" not in str(Vault((c,)))


def test_vault_ids_unique():
    d = DomainName.parse("a.com")
    with pytest.raises(InvariantError):
        Vault((Credential("x", "u", "p", d), Credential("x", "v", "q", d)))


def test_app_identity_validates_fields():
    with pytest.raises(InvariantError):
        AppIdentity("nodots", fingerprint("k"))
    with pytest.raises(InvariantError):
        AppIdentity("com.a.b", "ABC")


labels = st.sampled_from(["walmart", "example", "bank", "shop"])
tlds = st.sampled_from(["com", "org", "co.uk", "net"])
subs = st.lists(st.sampled_from(["www", "m", "login"]), max_size=2)
domains = st.builds(lambda s, l, t: ".".join(s + [l, t]), subs, labels, tlds)


@given(st.lists(domains, min_size=0, max_size=8), domains)
def test_credentials_for_domain_equals_brute_force(cred_domains, page):
    vault = Vault(
        tuple(
            Credential(f"c{i}", "u", f"p{i}", DomainName.parse(d))
            for i, d in enumerate(cred_domains)
        )
    )

    def site(host):
        parts = host.split(".")
        n = 3 if host.endswith(".co.uk") else 2
        return ".".join(parts[-n:])

    expected = sorted(f"c{i}" for i, d in enumerate(cred_domains) if site(d) == site(page))
    got = [c.id for c in credentials_for_domain(vault, Origin(DomainName.parse(page)))]
    assert got == expected


def test_scene_round_trips_through_render(scene):
    again = load_scene(render_scene(scene))
    assert scene_to_dict(again) == scene_to_dict(scene)


def test_signing_key_renders_as_fingerprint():
    data = make_scene(apps=[{"package_id": "com.walmart.android", "signing_key": "k1"}])
    text = render_scene(scene_from_dict(data))
    assert fingerprint("k1") in text
    assert '"k1"' not in text


def test_scene_rejects_unknown_keys():
    with pytest.raises(SchemaError):
        scene_from_dict(make_scene(extra=1))


def test_scene_rejects_dangling_manual_mapping():
    data = make_scene()
    data["vault"]["manual_app_mappings"] = [{"package_id": "com.nope.app", "domain": "walmart.com"}]
    with pytest.raises(SceneReferenceError):
        scene_from_dict(data)


def test_certificate_entry_controls_security():
    data = make_scene()
    data["domains"]["walmart.com"]["certificate"] = {"valid": False, "reason": "self-signed"}
    scene = scene_from_dict(data)
    endpoint = scene.resolve_url("https://walmart.com/login.html")
    assert endpoint.origin.security.kind is SecurityKind.HTTPS_INVALID_CERT
    assert scene.resolve_url("http://walmart.com/").origin.security == HTTP
