"""Regenerate the framework-level golden reports under src/autofill_sim/data/goldens."""

from __future__ import annotations

from pathlib import Path

from autofill_sim.frameworks import ALL_POLICIES
from autofill_sim.harness import Suite, render_report, run_suite

OUT = Path(__file__).resolve().parents[1] / "src/autofill_sim/data/goldens"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for suite in Suite:
        for policy in ALL_POLICIES:
            path = OUT / f"{suite.value}-{policy.value}.json"
            path.write_text(render_report(run_suite(suite, policy), "json"))
            print(path)


if __name__ == "__main__":
    main()
