import json
import shutil

import pytest

from autofill_sim import cli
from autofill_sim.attacks import AttackKind
from autofill_sim.errors import FixtureMissing, GoldenParseError
from autofill_sim.frameworks import PolicyId
from autofill_sim.harness import (
    SUITE_CHECKS,
    AttackRecord,
    ConformanceReport,
    Suite,
    Verdict,
    compare_golden,
    default_fixture_dir,
    parse_report,
    render_report,
    run_attack_matrix,
    run_suite,
)
from autofill_sim.model import UserAgent

S, I = Verdict.SECURE, Verdict.INSECURE


@pytest.fixture(scope="module")
def pa_browser():
    return run_suite(Suite.BROWSER, PolicyId.PASSWORD_AUTOFILL)


def test_cells_follow_column_order(pa_browser):
    assert tuple(c for c, _ in pa_browser.cells) == SUITE_CHECKS[Suite.BROWSER]
    with pytest.raises(ValueError):
        ConformanceReport(Suite.BROWSER, PolicyId.SECURE, None, tuple(reversed(pa_browser.cells)))


def test_golden_match_and_single_flip(pa_browser, tmp_json):
    golden = json.loads(render_report(pa_browser, "json"))
    assert not compare_golden(pa_browser, tmp_json("g.json", golden))
    golden["cells"][6]["verdict"] = "secure"
    diff = compare_golden(pa_browser, tmp_json("flip.json", golden))
    assert len(diff) == 1
    assert [(c.value, w, g) for c, w, g in diff] == [("action-dynamic", S, I)]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda g: g["cells"][0].update(check="teleport"),
        lambda g: g["cells"][0].update(verdict="meh"),
        lambda g: g.pop("cells"),
        lambda g: g.update(framework="secure-model"),
    ],
)
def test_bad_golden(pa_browser, tmp_json, mutate):
    golden = json.loads(render_report(pa_browser, "json"))
    mutate(golden)
    with pytest.raises(GoldenParseError):
        compare_golden(pa_browser, tmp_json("bad.json", golden))


def test_unreadable_golden(pa_browser, tmp_path):
    with pytest.raises(GoldenParseError):
        compare_golden(pa_browser, tmp_path / "absent.json")
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(GoldenParseError):
        compare_golden(pa_browser, tmp_path / "x.json")


def test_json_round_trip_with_attacks(pa_browser):
    records = run_attack_matrix([AttackKind.WEBVIEW_MALICIOUS_APP], [PolicyId.PASSWORD_AUTOFILL])
    report = ConformanceReport(pa_browser.suite, pa_browser.policy, None, pa_browser.cells, records)
    text = render_report(report, "json")
    assert parse_report(text) == report
    assert render_report(parse_report(text), "json") == text


def test_markdown_row_and_attack_table(pa_browser):
    md = render_report(pa_browser, "markdown")
    row = next(line for line in md.splitlines() if line.startswith("| ios-password-autofill"))
    assert row.split(" | ")[1:] == ["●", "●"] + ["○"] * 6 + ["○ |"]
    assert "## attacks" not in md
    rec = AttackRecord(
        AttackKind.GET_METHOD_LEAK,
        PolicyId.SECURE,
        None,
        UserAgent.ALWAYS_APPROVE,
        run_attack_matrix(
            [AttackKind.GET_METHOD_LEAK], [PolicyId.SECURE], [UserAgent.ALWAYS_APPROVE]
        )[0].outcome,
    )
    with_attacks = ConformanceReport(
        pa_browser.suite, pa_browser.policy, None, pa_browser.cells, (rec,)
    )
    tail = render_report(with_attacks, "markdown").split("## attacks")[1]
    assert "Blocked(method-get)" in tail


def test_reports_never_contain_passwords(pa_browser):
    records = run_attack_matrix(
        list(AttackKind), [PolicyId.PASSWORD_AUTOFILL], [UserAgent.ALWAYS_APPROVE]
    )
    report = ConformanceReport(pa_browser.suite, pa_browser.policy, None, pa_browser.cells, records)
    for fmt in ("json", "markdown"):
        assert "pw-walmart-5be1" not in render_report(report, fmt)


def test_missing_fixture(tmp_path):
    with pytest.raises(FixtureMissing):
        run_suite(Suite.NATIVE, PolicyId.SECURE, scene_dir=tmp_path)


def test_fixture_env_override(tmp_path, monkeypatch):
    shutil.copytree(default_fixture_dir(), tmp_path / "fx")
    monkeypatch.setenv("AUTOFILL_SIM_FIXTURES", str(tmp_path / "fx"))
    assert default_fixture_dir() == tmp_path / "fx"
    (tmp_path / "fx" / "native" / "other-app-access.json").unlink()
    assert cli.main(["run", "--suite", "native", "--framework", "secure-model"]) == 2


def test_manager_rows_are_not_delegated():
    report = run_suite(Suite.BROWSER, PolicyId.ANDROID_SERVICE, "bitwarden")
    assert Verdict.DELEGATED not in report.verdicts()
    assert report.subject == "android-autofill-service/bitwarden"


class TestCli:
    def test_run_with_shipped_golden(self, capsys):
        golden = cli.golden_path(Suite.WEBVIEW, PolicyId.EXTENSIONS)
        argv = [
            "run",
            "--suite",
            "webview",
            "--framework",
            "ios-extensions",
            "--golden",
            str(golden),
        ]
        assert cli.main(argv) == 0
        assert "✎" in capsys.readouterr().out

    def test_run_diff_exit_code(self, tmp_json):
        golden = json.loads(cli.golden_path(Suite.NATIVE, PolicyId.EXTENSIONS).read_text())
        golden["cells"][1]["verdict"] = "secure"
        argv = [
            "run",
            "--suite",
            "native",
            "--framework",
            "ios-extensions",
            "--golden",
            str(tmp_json("g.json", golden)),
        ]
        assert cli.main(argv) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["run", "--suite", "moon"])
        assert info.value.code == 2

    def test_attack_masks_unless_revealed(self, capsys):
        argv = [
            "attack",
            "--attack",
            "webview-malicious-app",
            "--framework",
            "ios-password-autofill",
        ]
        assert cli.main(argv) == 0
        out = capsys.readouterr().out
        assert "UserGated→Stolen" in out and "pw-walmart-5be1" not in out
        assert cli.main(argv + ["--reveal"]) == 0
        assert "pw-walmart-5be1" in capsys.readouterr().out

    def test_attack_exit_codes(self):
        assert (
            cli.main(["attack", "--attack", "get-method-leak", "--framework", "secure-model"]) == 0
        )
        assert (
            cli.main(
                [
                    "attack",
                    "--attack",
                    "look-alike-app",
                    "--framework",
                    "ios-extensions",
                    "--manager",
                    "nope",
                ]
            )
            == 2
        )
