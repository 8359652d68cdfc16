import json
import sys
from pathlib import Path

import pytest

from autofill_sim.model import scene_from_dict


def make_scene(**overrides):
    """A tiny valid scene: one credential for walmart.com, one login page."""
    data = {
        "vault": {
            "credentials": [
                {
                    "id": "w",
                    "username": "alice",
                    "password": "hunter2-walmart",
                    "domain": "walmart.com",
                }
            ]
        },
        "apps": [],
        "domains": {
            "walmart.com": {
                "documents": {
                    "/login.html": (
                        '<form action="/login" method="post">'
                        '<input name="email" type="email">'
                        '<input name="password" type="password"></form>'
                    )
                }
            }
        },
        "user_agent": "always-approve",
    }
    data.update(overrides)
    return data


@pytest.fixture
def scene_dict():
    return make_scene()


@pytest.fixture
def scene(scene_dict):
    return scene_from_dict(scene_dict)


@pytest.fixture
def tmp_json(tmp_path):
    def write(name, obj):
        path = Path(tmp_path) / name
        path.write_text(json.dumps(obj))
        return path

    return write


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
