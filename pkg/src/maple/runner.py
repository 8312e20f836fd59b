"""Wiring for task and suite runs: backends, devices, scoring and the run directory."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .actions import describe
from .agents import AgentConfig, KnowledgeStore, RunResult, orchestrate
from .agents.prompts import PROMPT_VERSION
from .clock import SimClock
from .device import SimDevice
from .evalharness import (
    MetricsReport, TaskResult, TaskSpec, action_accuracy, compute_metrics, score_rubrics,
)
from .fsm import export_fsm
from .llm import Gateway, RecordingBackend, ReplayArchive, ReplayBackend
from .perception import MockPerceiver
from .sim import FaultPolicy, SimWorld, WorldSpec
from .sim.oracle import OracleBackend, load_playbook

log = logging.getLogger(__name__)


def golden_dir() -> Path:
    return Path(str(resources.files("maple").joinpath("data", "golden")))


def golden(name: str) -> Path:
    """Resolve the ``golden`` alias for world, suite, archive and playbook paths."""
    return golden_dir() / {"world": "world.json", "suite": "", "archive": "archive",
                           "playbook": "playbook.json"}[name]


@dataclass
class ModelSetup:
    """How model calls are served: replay, the scripted oracle, or a live provider."""

    kind: str  # replay | oracle | live:<provider>
    archive: Optional[Path] = None
    record: Optional[Path] = None
    playbook: Optional[Path] = None

    def backend(self, world: Optional[SimWorld]):
        if self.kind == "replay":
            if self.archive is None:
                raise ValueError("replay mode needs an archive path")
            inner = ReplayBackend(ReplayArchive(self.archive))
        elif self.kind == "oracle":
            if world is None:
                raise ValueError("the oracle backend only drives simulated runs")
            inner = OracleBackend(load_playbook(self.playbook or golden("playbook")), world)
        elif self.kind.startswith("live:"):
            from .llm.live import live_backend
            inner = live_backend(self.kind.split(":", 1)[1])
        else:
            raise ValueError(f"unknown model backend {self.kind!r}")
        if self.record is not None:
            return RecordingBackend(inner, ReplayArchive(self.record))
        return inner


@dataclass
class TaskRun:
    task: TaskSpec
    result: RunResult
    score: TaskResult
    transcript: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return self.result.trace.status


def score(task: TaskSpec, result: RunResult) -> TaskResult:
    trace = result.trace
    rubrics = (0, 0)
    if task.rubrics and result.final_state is not None:
        rubrics = score_rubrics(trace, result.final_state, task.rubrics)
    actions = (0, 0)
    if task.human_reference_operations:
        actions = action_accuracy([describe(s.action) for s in trace.steps],
                                  task.human_reference_operations)
    rounds = trace.recoveries
    return TaskResult(task.task_id, trace.status, rubrics, actions,
                      (sum(r.recovered for r in rounds), len(rounds)))


def run_sim_task(
    task: TaskSpec,
    world: WorldSpec,
    model: ModelSetup,
    config: AgentConfig = AgentConfig(),
    faults: FaultPolicy = FaultPolicy(),
    store: Optional[KnowledgeStore] = None,
) -> TaskRun:
    sim = SimWorld(world, faults)
    clock = SimClock()
    gateway = Gateway(model.backend(sim), sleep=clock.sleep, clock=clock.now)
    result = orchestrate(task, gateway, SimDevice(sim, clock), MockPerceiver(), config, store)
    return TaskRun(task, result, score(task, result), list(gateway.transcript))


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "app"


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def write_run(run: TaskRun, out: Path) -> None:
    """Trace (JSON lines), summary, transcript, FSM exports and per-task metrics."""
    out.mkdir(parents=True, exist_ok=True)
    trace = run.result.trace
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for step in trace.steps:
            fh.write(json.dumps(step.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    summary = trace.summary()
    summary["journal"] = run.result.journal.to_dict()
    summary["final_state"] = run.result.final_state
    _dump(out / "summary.json", summary)
    with open(out / "transcript.jsonl", "w", encoding="utf-8") as fh:
        for e in run.transcript:
            fh.write(json.dumps({"tag": e.tag, "digest": e.digest, "text": e.text, "error": e.error},
                                sort_keys=True, ensure_ascii=False) + "\n")
    fsm_dir = out / "fsms"
    fsm_dir.mkdir(exist_ok=True)
    for fsm in run.result.fsms.values():
        (fsm_dir / f"{_safe(fsm.app)}.json").write_text(export_fsm(fsm, "json") + "\n", encoding="utf-8")
        (fsm_dir / f"{_safe(fsm.app)}.dot").write_text(export_fsm(fsm, "dot") + "\n", encoding="utf-8")
    _dump(out / "metrics.json", {"task": run.score.to_dict(),
                                 "metrics": compute_metrics([run.score]).to_dict()})


def run_config_doc(config: AgentConfig, **extra) -> dict:
    return {"agent": config.to_dict(), "prompt_version": PROMPT_VERSION, **extra}


def run_suite(
    tasks: Sequence[TaskSpec],
    world: WorldSpec,
    model: ModelSetup,
    config: AgentConfig = AgentConfig(),
    faults: FaultPolicy = FaultPolicy(),
    store: Optional[KnowledgeStore] = None,
    out: Optional[Path] = None,
    on_task: Optional[Callable[[TaskRun], None]] = None,
) -> tuple[list[TaskRun], MetricsReport]:
    """Run tasks one after another; every task gets a fresh world with the same fault seed."""
    runs = []
    for task in tasks:
        run = run_sim_task(task, world, model, config, faults, store)
        runs.append(run)
        if out is not None:
            write_run(run, Path(out) / _safe(task.task_id))
        if on_task is not None:
            on_task(run)
    report = compute_metrics([r.score for r in runs])
    if out is not None:
        _dump(Path(out) / "metrics.json", report.to_dict())
        (Path(out) / "report.txt").write_text(report.to_text(), encoding="utf-8")
        (Path(out) / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    return runs, report
