#!/usr/bin/env python3
"""Interaction scenario: two persons with scripted attention windows; shows
head-pose yaw, willingness loading, and trigger events per frame."""

from pathlib import Path

from semmap.simulator import Scenario, run_scenario

SCENARIO = Path(__file__).resolve().parents[1] / "configs/scenarios/interaction.json"


def main():
    scenario = Scenario.from_json(SCENARIO)
    _map_export, metrics, events = run_scenario(scenario)
    for ev in events:
        for row in ev["persons"]:
            flag = " TRIGGER" if row["track"] in ev["triggers"] else ""
            print(f"t={ev['t']:4.1f}s person {row['person']} "
                  f"yaw={row['yaw']:+6.1f} attending={row['attending']!s:<5s} "
                  f"value={row['value']:.2f}{flag}")
    print("triggers:", metrics.willingness_trigger_times)


if __name__ == "__main__":
    main()
