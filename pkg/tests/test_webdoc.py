import pytest
from conftest import make_scene
from hypothesis import given, settings
from hypothesis import strategies as st

from autofill_sim.errors import (
    BadFormIndex,
    HostScriptOutsideWebView,
    MissingSubstitution,
    ParseError,
    SceneReferenceError,
    UnsupportedTag,
)
from autofill_sim.model import (
    HTTPS_VALID,
    DomainName,
    Endpoint,
    Origin,
    scene_from_dict,
)
from autofill_sim.webdoc import (
    PLACEHOLDER_RE,
    Document,
    ExfiltrateTo,
    Field,
    FieldKey,
    FieldKind,
    Form,
    FormRef,
    InjectedBy,
    Method,
    PostToBridge,
    RewriteAction,
    ScrapeFields,
    ScriptEvent,
    ScriptPhase,
    Substitution,
    detect_login_form,
    detect_login_forms_deep,
    load_document,
    make_placeholder,
    parse_document,
    run_script_phase,
    submit_form,
)

SHOP = Origin(DomainName.parse("shop.com"), HTTPS_VALID)
EVIL = Endpoint(Origin(DomainName.parse("evil.net"), HTTPS_VALID), "/c")


def parse(html):
    return parse_document(html, SHOP, "/login")


class TestParser:
    def test_login_form(self):
        doc = parse(
            '<form action="/s" method="POST"><input name="user"><input name="pw" type="password"></form>'
        )
        (form,) = doc.forms
        assert form.method is Method.POST
        assert str(form.action) == "https://shop.com/s"
        assert [f.kind for f in form.fields] == [FieldKind.USERNAME, FieldKind.PASSWORD]

    def test_method_defaults_to_get_and_action_to_page(self):
        (form,) = parse('<form><input name="q"></form>').forms
        assert form.method is Method.GET
        assert form.action == Endpoint(SHOP, "/login")

    def test_hidden_inputs_and_frames(self):
        doc = parse(
            '<form><input name="t" type="hidden" value="x"><input name="a" hidden></form>'
            '<iframe src="https://ads.net/x" hidden></iframe>'
        )
        assert [f.visible for f in doc.forms[0].fields] == [False, False]
        assert doc.frames[0].visible is False
        assert doc.is_cross_origin(0)

    def test_script_event_tag(self):
        doc = parse(
            '<script-event phase="post-fill" do="exfiltrate" url="https://evil.net/c"></script-event>'
        )
        assert doc.scripts == (ScriptEvent(ScriptPhase.POST_FILL, ExfiltrateTo(EVIL)),)

    def test_unsupported_tag_reports_position(self):
        with pytest.raises(UnsupportedTag) as info:
            parse("<form>\n  <div></div></form>")
        assert (info.value.line, info.value.column) == (2, 3)

    @pytest.mark.parametrize(
        "html",
        [
            '<form onsubmit="x"><input name="a"></form>',
            "<form></form>",
            '<form><input name="a">',
            '<input name="a">',
            '<form><form><input name="a"></form></form>',
            '<form method="put"><input name="a"></form>',
            '<form><input name="a"><input name="a"></form>',
            '<script-event phase="whenever" do="scrape"></script-event>',
        ],
    )
    def test_rejects(self, html):
        with pytest.raises(ParseError):
            parse(html)


def form(*fields, action=Endpoint(SHOP, "/s"), method=Method.POST):
    return Form(action, method, tuple(fields))


U = Field("user", FieldKind.USERNAME)
P = Field("pw", FieldKind.PASSWORD, input_type="password")
T = Field("note", FieldKind.TEXT)


class TestDetection:
    def test_nearest_preceding_username(self):
        doc = Document(Endpoint(SHOP), (form(U, T, P),))
        assert [(i, u.name, p.name) for i, u, p in detect_login_form(doc)] == [(0, "note", "pw")]

    def test_username_after_password(self):
        doc = Document(Endpoint(SHOP), (form(P, U),))
        assert detect_login_form(doc)[0][1].name == "user"

    def test_two_passwords_is_not_login(self):
        doc = Document(Endpoint(SHOP), (form(U, P, Field("pw2", FieldKind.PASSWORD)),))
        assert detect_login_form(doc) == []

    def test_deep_detection_walks_frames(self, scene_dict):
        scene_dict["domains"]["shop.com"] = {
            "documents": {"/": '<iframe src="https://walmart.com/login.html"></iframe>'}
        }
        scene = scene_from_dict(scene_dict)
        doc = load_document(scene, scene.resolve_url("https://shop.com/"))
        (hit,) = detect_login_forms_deep(doc)
        assert hit.ref == FormRef((0,), 0)


def test_form_action_must_be_in_scene():
    data = make_scene()
    data["domains"]["walmart.com"]["documents"]["/x"] = {
        "forms": [{"action": "https://nowhere.org/", "fields": [{"name": "a", "kind": "text"}]}]
    }
    with pytest.raises(SceneReferenceError):
        scene_from_dict(data)


def test_missing_document_is_a_reference_error(scene):
    with pytest.raises(SceneReferenceError):
        load_document(scene, scene.resolve_url("https://walmart.com/nope"))


# --- scripts: checked against a deliberately naive interpreter ---------------


def naive(forms, scripts, phase, fill, webview):
    actions = [f.action for f in forms]
    buffer, sent = [], []
    for ev in scripts:
        if ev.phase != phase:
            continue
        a = ev.action
        if type(a) is RewriteAction:
            actions[a.form] = a.target
        elif type(a) is ScrapeFields:
            buffer = []
            for f in forms[a.form].fields:
                v = fill.get(f.name, f.value)
                if v is not None:
                    buffer.append((f.name, v))
        elif type(a) is ExfiltrateTo:
            sent.append((a.destination, None, tuple(buffer)))
        elif webview:
            sent.append((None, a.channel, tuple(buffer)))
    return actions, sent


phases = st.sampled_from(list(ScriptPhase))
events = st.one_of(
    st.builds(RewriteAction, st.integers(0, 1), st.just(EVIL)),
    st.builds(ScrapeFields, st.integers(0, 1)),
    st.builds(ExfiltrateTo, st.just(EVIL)),
    st.builds(PostToBridge, st.just("bridge")),
)
scripts = st.lists(st.builds(ScriptEvent, phases, events), max_size=10)


@settings(max_examples=200)
@given(
    scripts,
    phases,
    st.booleans(),
    st.dictionaries(st.sampled_from(["user", "pw", "q"]), st.text(max_size=5)),
)
def test_script_phase_matches_naive_interpreter(evs, phase, webview, fill):
    forms = (form(U, P), form(Field("q", FieldKind.TEXT, value="seed")))
    doc = Document(Endpoint(SHOP, "/login"), forms, (), tuple(evs))
    fill_state = {
        FieldKey((), 0 if name != "q" else 1, name): value for name, value in fill.items()
    }
    new_doc, exfils = run_script_phase(doc, phase, fill_state, webview=webview)
    actions, sent = naive(forms, evs, phase, fill, webview)
    assert [f.action for f in new_doc.forms] == actions
    assert [(e.destination, e.channel, e.values) for e in exfils] == sent


def test_host_script_outside_webview_raises():
    ev = ScriptEvent(ScriptPhase.POST_FILL, ScrapeFields(0), InjectedBy.HOST_APP)
    doc = Document(Endpoint(SHOP), (form(U, P),), (), (ev,))
    with pytest.raises(HostScriptOutsideWebView):
        run_script_phase(doc, ScriptPhase.POST_FILL, {})
    run_script_phase(doc, ScriptPhase.POST_FILL, {}, webview=True)


def test_bad_form_index():
    doc = Document(
        Endpoint(SHOP), (form(U, P),), (), (ScriptEvent(ScriptPhase.ON_LOAD, ScrapeFields(3)),)
    )
    with pytest.raises(BadFormIndex):
        run_script_phase(doc, ScriptPhase.ON_LOAD, {})


# --- submission --------------------------------------------------------------


def test_get_puts_values_in_url_post_in_body():
    fill = {FieldKey((), 0, "user"): "alice", FieldKey((), 0, "pw"): "s3"}
    get = submit_form(
        Document(Endpoint(SHOP), (form(U, P, method=Method.GET),)), FormRef((), 0), fill
    )
    post = submit_form(Document(Endpoint(SHOP), (form(U, P),)), FormRef((), 0), fill)
    assert get.url_params == {"user": "alice", "pw": "s3"} and not get.body_params
    assert post.body_params == {"user": "alice", "pw": "s3"} and not post.url_params


def test_substitution_swaps_placeholder_only_for_issued_origin():
    token = make_placeholder("c1", "abcd")
    assert PLACEHOLDER_RE.fullmatch(token)
    fill = {FieldKey((), 0, "pw"): token}
    sub = Substitution(SHOP, {token: "real-secret"})
    doc = Document(Endpoint(SHOP), (form(U, P),))
    assert submit_form(doc, FormRef((), 0), fill, sub).body_params["pw"] == "real-secret"
    moved = Document(Endpoint(SHOP), (form(U, P, action=EVIL),))
    with pytest.raises(MissingSubstitution):
        submit_form(moved, FormRef((), 0), fill, sub)
    with pytest.raises(MissingSubstitution):
        submit_form(
            doc, FormRef((), 0), {FieldKey((), 0, "pw"): make_placeholder("c1", "ffff")}, sub
        )
    assert "real-secret" not in repr(sub)
