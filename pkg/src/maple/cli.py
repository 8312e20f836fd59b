"""Command line entry point.

Exit codes:

* 0 - run succeeded (``run``), or the suite finished (``bench``, any outcomes)
* 1 - configuration or input error
* 2 - the task terminated unsuccessfully
* 3 - the step budget ran out

Settings resolve as flags > ``MAPLE_*`` environment variables > ``--config``
JSON file > defaults. The literal ``golden`` names the bundled world, suite,
archive or playbook.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional

from .agents import AgentConfig, KnowledgeStore
from .errors import MapleError
from .evalharness import TaskSpec, load_suite, load_task
from .fsm import export_fsm, import_fsm
from .runner import (
    ModelSetup, TaskRun, golden, run_config_doc, run_suite, score, write_run,
)
from .sim import FaultPolicy, load_world

log = logging.getLogger("maple")

EXIT_OK, EXIT_CONFIG, EXIT_TERMINATED, EXIT_BUDGET = 0, 1, 2, 3
STATUS_EXIT = {"success": EXIT_OK, "terminated": EXIT_TERMINATED, "step-budget-exhausted": EXIT_BUDGET}

DEFAULTS: dict[str, Any] = {
    "device": "sim", "model": None, "seed": 0, "budget": 40, "max_replans": 2, "p_noop": 0.0,
    "p_misroute": 0.0, "out": "out", "no_planner": False, "single_plan": False,
    "no_conditions": False, "no_mentor": False,
}
SWITCHES = ("no_planner", "single_plan", "no_conditions", "no_mentor")


class ConfigError(Exception):
    pass


class Settings:
    """Flag > env > file > default lookup."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: dict = {}
        if getattr(args, "config", None):
            try:
                self.file = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc

    def get(self, name: str, cast=str):
        flag = getattr(self.args, name, None)
        if flag is not None and flag is not False:
            return flag
        env = os.environ.get(f"MAPLE_{name.upper()}")
        if env is not None and env != "":
            if cast is bool:
                return env.strip().lower() in ("1", "true", "yes", "on")
            try:
                return cast(env)
            except ValueError as exc:
                raise ConfigError(f"bad value for MAPLE_{name.upper()}: {env!r}") from exc
        if name in self.file:
            return self.file[name]
        return DEFAULTS.get(name)


def _path(value: Optional[str], alias: str) -> Optional[Path]:
    if value is None:
        return None
    return golden(alias) if value == "golden" else Path(value)


def _existing(value: Optional[str], alias: str, what: str) -> Path:
    path = _path(value, alias)
    if path is None:
        raise ConfigError(f"{what} is required")
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _agent_config(s: Settings) -> AgentConfig:
    try:
        return AgentConfig(budget=int(s.get("budget", int)), max_replans=int(s.get("max_replans", int)),
                           **{k: bool(s.get(k, bool)) for k in SWITCHES})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _model(s: Settings) -> ModelSetup:
    replay = s.get("replay")
    kind = s.get("model") or ("replay" if replay else None)
    if kind is None:
        raise ConfigError("choose a model backend: --model replay|oracle|live:<provider>")
    archive = _existing(replay, "archive", "replay archive") if kind == "replay" else None
    record = _path(s.get("record"), "archive")
    playbook = _existing(s.get("playbook"), "playbook", "playbook") if s.get("playbook") else None
    return ModelSetup(kind, archive, record, playbook)


def _faults(s: Settings) -> FaultPolicy:
    try:
        return FaultPolicy(seed=int(s.get("seed", int)), p_noop=float(s.get("p_noop", float)),
                           p_misroute=float(s.get("p_misroute", float)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _store(s: Settings, out: Path) -> KnowledgeStore:
    kb = s.get("kb")
    if kb:
        return KnowledgeStore(kb)
    # run-local store, reset so that re-running into the same directory replays identically
    store = KnowledgeStore(out / "knowledge.json")
    store.clear()
    return store


def _task(s: Settings) -> TaskSpec:
    ref = s.get("task")
    if not ref:
        raise ConfigError("--task is required")
    if Path(ref).is_file():
        return load_task(ref)
    suite = s.get("suite")
    if suite:
        for spec in load_suite(_existing(suite, "suite", "suite directory")):
            if spec.task_id == ref:
                return spec
    raise ConfigError(f"task not found: {ref}")


def _write_config(out: Path, s: Settings, config: AgentConfig, model: ModelSetup, **extra) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = run_config_doc(config, model=model.kind, seed=s.get("seed", int),
                         p_noop=s.get("p_noop", float), p_misroute=s.get("p_misroute", float), **extra)
    (out / "config.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _run_live(task: TaskSpec, s: Settings, config: AgentConfig, model: ModelSetup,
              store: KnowledgeStore) -> TaskRun:
    from .agents import orchestrate
    from .device import AdbDevice
    from .llm import Gateway
    from .perception import ServicePerceiver

    url = s.get("perception_url")
    if not url:
        raise ConfigError("adb runs need --perception-url (or MAPLE_PERCEPTION_URL)")
    packages = s.get("packages")
    device = (AdbDevice.with_package_file(packages, serial=s.get("serial")) if packages
              else AdbDevice(serial=s.get("serial")))
    gateway = Gateway(model.backend(None))
    result = orchestrate(task, gateway, device, ServicePerceiver(url), config, store)
    return TaskRun(task, result, score(task, result), list(gateway.transcript))


def cmd_run(args) -> int:
    s = Settings(args)
    config = _agent_config(s)
    model = _model(s)
    task = _task(s)
    out = Path(s.get("out"))
    store = _store(s, out)
    device = s.get("device")
    if device == "sim":
        world = load_world(_existing(s.get("world"), "world", "world file"))
        run = run_suite([task], world, model, config, _faults(s), store)[0][0]
    elif device == "adb":
        if model.kind == "oracle":
            raise ConfigError("the oracle backend only drives simulated runs")
        run = _run_live(task, s, config, model, store)
    else:
        raise ConfigError(f"unknown device {device!r}")
    write_run(run, out)
    _write_config(out, s, config, model, task=task.task_id, device=device)
    print(f"{task.task_id}: {run.status} in {len(run.result.trace.steps)} steps")
    return STATUS_EXIT.get(run.status, EXIT_TERMINATED)


def cmd_bench(args) -> int:
    s = Settings(args)
    config = _agent_config(s)
    model = _model(s)
    tasks = load_suite(_existing(s.get("suite"), "suite", "suite directory"))
    if s.get("device") != "sim":
        raise ConfigError("bench runs on the simulator only")
    world = load_world(_existing(s.get("world"), "world", "world file"))
    out = Path(s.get("out"))
    store = _store(s, out)
    _, report = run_suite(tasks, world, model, config, _faults(s), store, out=out,
                          on_task=lambda r: print(f"{r.task.task_id}: {r.status}", file=sys.stderr))
    _write_config(out, s, config, model, tasks=[t.task_id for t in tasks], device="sim")
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    fsm_dir = run_dir / "fsms"
    if not fsm_dir.is_dir():
        raise ConfigError(f"no FSM exports under {run_dir}")
    match = None
    for path in sorted(fsm_dir.glob("*.json")):
        fsm = import_fsm(path.read_text(encoding="utf-8"))
        if fsm.app.casefold() == args.app.strip().casefold():
            match = fsm
            break
    if match is None:
        raise ConfigError(f"no FSM for app {args.app!r} in {run_dir}")
    text = export_fsm(match, args.format) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_kb(args) -> int:
    s = Settings(args)
    path = s.get("kb") or "out/knowledge.json"
    store = KnowledgeStore(path)
    if args.action == "clear":
        store.clear()
        return EXIT_OK
    if not Path(path).is_file():
        raise ConfigError(f"no knowledge store at {path}")
    kb = store.load()
    if args.action == "list":
        print(kb.counts())
    else:
        print(json.dumps(kb.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON settings file (lowest precedence)")
    p.add_argument("--suite", help="suite directory, or 'golden'")
    p.add_argument("--device", choices=["sim", "adb"])
    p.add_argument("--world", help="world file for --device sim, or 'golden'")
    p.add_argument("--model", help="replay | oracle | live:openai|anthropic|google")
    p.add_argument("--replay", help="replay archive directory, or 'golden'")
    p.add_argument("--record", help="archive directory to record responses into")
    p.add_argument("--playbook", help="playbook for the oracle backend")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="step budget per task (default 40)")
    p.add_argument("--max-replans", type=int, dest="max_replans")
    p.add_argument("--p-noop", type=float, dest="p_noop", help="probability a tap is dropped")
    p.add_argument("--p-misroute", type=float, dest="p_misroute")
    p.add_argument("--no-planner", action="store_true", dest="no_planner")
    p.add_argument("--single-plan", action="store_true", dest="single_plan")
    p.add_argument("--no-conditions", action="store_true", dest="no_conditions")
    p.add_argument("--no-mentor", action="store_true", dest="no_mentor")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--kb", help="knowledge store file (default: fresh <out>/knowledge.json)")
    p.add_argument("--perception-url", dest="perception_url")
    p.add_argument("--serial", help="adb device serial")
    p.add_argument("--packages", help="JSON map of app name to Android package")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maple", description="State-aware mobile GUI agent.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one task")
    run.add_argument("--task", help="task file, or a task id within --suite")
    _common(run)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="run a suite and report metrics")
    _common(bench)
    bench.set_defaults(func=cmd_bench)

    export = sub.add_parser("export", help="export one app's FSM from a run directory")
    export.add_argument("run_dir")
    export.add_argument("--app", required=True)
    export.add_argument("--format", choices=["dot", "json"], default="dot")
    export.add_argument("-o", "--output")
    export.set_defaults(func=cmd_export)

    kb = sub.add_parser("kb", help="inspect or reset the knowledge store")
    kb.add_argument("action", choices=["list", "clear", "show"])
    kb.add_argument("--kb")
    kb.add_argument("--config")
    kb.set_defaults(func=cmd_kb)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MapleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
