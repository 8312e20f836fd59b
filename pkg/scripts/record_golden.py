"""Re-record the shipped golden replay archive from the scripted oracle.

Run after changing prompts, the world or the playbook:

    python scripts/record_golden.py
"""

import shutil
import tempfile
from pathlib import Path

from maple.agents import AgentConfig, KnowledgeStore
from maple.evalharness import load_suite
from maple.runner import ModelSetup, golden, golden_dir, run_sim_task, run_suite
from maple.sim import FaultPolicy, load_world

# crafted fixture: the first tap and both retries are dropped
DOUBLE_FAILURE = ("notes_buy_milk", frozenset({0, 1, 2}))


def main() -> None:
    archive = golden("archive")
    shutil.rmtree(archive, ignore_errors=True)
    archive.mkdir(parents=True)
    model = ModelSetup("oracle", record=archive)
    tasks = load_suite(golden_dir())
    world = load_world(golden("world"))
    configs = [
        (AgentConfig(), FaultPolicy()),
        (AgentConfig(), FaultPolicy(seed=7, p_noop=0.3)),
        (AgentConfig(no_planner=True), FaultPolicy()),
        (AgentConfig(single_plan=True), FaultPolicy()),
        (AgentConfig(no_conditions=True), FaultPolicy()),
        (AgentConfig(no_mentor=True), FaultPolicy()),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        for n, (config, faults) in enumerate(configs):
            runs, report = run_suite(tasks, world, model, config, faults,
                                     KnowledgeStore(Path(tmp) / f"kb{n}.json"))
            print(config, faults, "SR", report.percent("SR"), "RS", report.percent("RS"))
        # one task at a time, as `maple run` does
        for task in tasks:
            run_suite([task], world, model, AgentConfig(), FaultPolicy(),
                      KnowledgeStore(Path(tmp) / f"single-{task.task_id}.json"))
    task_id, taps = DOUBLE_FAILURE
    task = next(t for t in tasks if t.task_id == task_id)
    run = run_sim_task(task, world, model, AgentConfig(), FaultPolicy(noop_taps=taps))
    print("double failure:", run.status, "replans", run.result.trace.replans)
    print(len(list(archive.glob("*.json"))), "archive entries")


if __name__ == "__main__":
    main()
