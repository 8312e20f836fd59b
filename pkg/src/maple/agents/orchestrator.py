"""The execution loop tying planning, acting, verification, recovery and retention together."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ..actions import AtomicAction
from ..errors import MapleError, UnparsableRecovery
from ..fsm import (
    AppFsm, CrossAppEdge, JournalEntry, TaskJournal, UiState, beacon_key, find_recovery_target,
)
from ..llm import Gateway
from ..verdict import Verdict
from .actor import DONE, decide_action
from .knowledge import KnowledgeBase, KnowledgeStore
from .mentor import retain
from .planner import Planner
from .prompts import history_block
from .reflection import build_recovery_plan, fallback_recovery_plan, verify
from .state_agent import describe_state
from .types import Plan, PlanItem, RecoveryRound, StepRecord, Trace

log = logging.getLogger(__name__)

FINISHED = "All subtasks are complete."


@dataclass(frozen=True)
class AgentConfig:
    budget: int = 40
    max_replans: int = 2
    recovery_failure_limit: int = 2
    no_planner: bool = False
    single_plan: bool = False
    no_conditions: bool = False
    no_mentor: bool = False
    # evaluate condition predicates against the device when it supports it
    mechanical: bool = True

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("step budget must be positive")
        if self.max_replans < 0 or self.recovery_failure_limit < 1:
            raise ValueError("bad recovery limits")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    trace: Trace
    fsms: dict[str, AppFsm]
    journal: TaskJournal
    final_state: Optional[dict] = None
    kb_delta: Optional[KnowledgeBase] = None


class _Stop(Exception):
    def __init__(self, status: str, reason: str):
        super().__init__(reason)
        self.status = status
        self.reason = reason


@dataclass
class Orchestrator:
    task: object  # anything with task_id, instruction, apps and optional judge_rubric
    gateway: Gateway
    device: object
    perceiver: object
    config: AgentConfig = field(default_factory=AgentConfig)
    store: Optional[KnowledgeStore] = None

    def __post_init__(self):
        self.trace = Trace(self.task.task_id)
        self.journal = TaskJournal()
        self.fsms: dict[str, AppFsm] = {}
        kb = self.store.load() if self.store is not None else KnowledgeBase()
        self.kb = kb.select(self.task.apps)
        n = 1 if self.config.single_plan else 5
        self.planner = Planner(self.gateway, n=n)
        check = getattr(self.device, "check", None)
        self.checker = check if (self.config.mechanical and callable(check)) else None
        self.items: list[PlanItem] = []
        self.pos = 0
        self.state: Optional[UiState] = None
        self.state_subtask: Optional[str] = None
        self.open_rounds: list[RecoveryRound] = []
        self.obs = None
        self.p = None

    # -- helpers ----------------------------------------------------------

    def _fsm(self, app: str) -> AppFsm:
        key = beacon_key(app)
        if key not in self.fsms:
            self.fsms[key] = AppFsm(app)
        return self.fsms[key]

    def _beacons(self) -> list[str]:
        seen = self.kb.beacons() + [s.beacon for f in self.fsms.values() for s in f.states.values()]
        return list(dict.fromkeys(seen))

    def _plan_text(self) -> str:
        return "\n".join(f"{n}. {i.subtask}" for n, i in enumerate(self.items, 1))

    def _describe(self, subtask: str, step: int, history: Sequence[StepRecord]) -> UiState:
        node = describe_state(
            self.gateway, self.p, self.obs.screenshot, subtask, self._beacons(),
            instruction=self.task.instruction, plan_text=self._plan_text(), history=history,
            step=step, conditions=not self.config.no_conditions,
        )
        fsm = self._fsm(node.app)
        fsm.current_goal = subtask
        return fsm.get(fsm.upsert_state(node))

    def _observe(self) -> None:
        self.obs = self.device.observe()
        self.p = self.perceiver.perceive(self.obs.screenshot)

    def _ensure_state(self, subtask: str) -> None:
        if self.state is None or self.state_subtask != subtask:
            self.state = self._describe(subtask, self.state.last_seen_step if self.state else 0,
                                        self.trace.steps)
            self.state_subtask = subtask

    # -- planning ----------------------------------------------------------

    def _install(self, plan: Plan) -> None:
        self.trace.plans.append(plan)
        self.items = list(plan.items)
        self.pos = 0

    def _initial_plan(self) -> None:
        if self.config.no_planner:
            plan = Plan((PlanItem(self.task.instruction, "carry out the request directly"),))
        else:
            plan = self.planner.plan(self.task.instruction, self.kb, self.task.apps,
                                     rubric=getattr(self.task, "judge_rubric", None))
        self._install(plan)

    def _replan(self, reason: str) -> None:
        self.open_rounds.clear()
        if self.trace.replans >= self.config.max_replans:
            raise _Stop("terminated", f"recovery failed after {self.trace.replans} replans: {reason}")
        self.trace.replans += 1
        if self.config.no_planner:
            plan = Plan((PlanItem(self.task.instruction, "carry out the request directly"),), "revised")
        else:
            plan = self.planner.plan(
                self.task.instruction, self.kb, self.task.apps,
                rubric=getattr(self.task, "judge_rubric", None),
                revision={"beacon": self.state.beacon, "app": self.state.app, "reason": reason,
                          "history": history_block(self.trace.steps)},
            )
        self._install(plan)

    # -- one action --------------------------------------------------------

    def _attempt(self, subtask: str, phase: str, upcoming: Callable[[Verdict], str]):
        if len(self.trace.steps) >= self.config.budget:
            raise _Stop("step-budget-exhausted", f"budget of {self.config.budget} steps used up")
        self._ensure_state(subtask)
        decision = decide_action(
            self.gateway, subtask, self.p, self.state, self.kb, instruction=self.task.instruction,
            history=self.trace.steps, conditions=not self.config.no_conditions,
        )
        if decision is DONE:
            return DONE
        action: AtomicAction = decision
        prev, obs_before, p_before = self.state, self.obs, self.p
        # describing the next screen may refresh this very node, keep its conditions
        pre_next, post_current = prev.precondition, prev.postcondition
        index = len(self.trace.steps)
        self.device.execute(action)
        self._observe()
        verdict = verify(
            self.gateway, prev, prev.precondition, p_before, self.p,
            (obs_before.screenshot, self.obs.screenshot), subtask, action, self.kb,
            checker=self.checker,
        )
        record = StepRecord(
            index, phase, subtask, action, verdict, prev.id, "", p_before.digest, self.p.digest,
            p_before.screenshot_ref, self.p.screenshot_ref, self.obs.timestamp,
        )
        next_subtask = upcoming(verdict)
        node = self._describe(next_subtask, index + 1, self.trace.steps + [record])
        if beacon_key(node.app) == beacon_key(prev.app):
            self._fsm(node.app).record_transition(prev.id, action, node.id, pre_next,
                                                  post_current, index)
        else:
            self.journal.add_cross_app(CrossAppEdge(prev.app, prev.id, action, node.app, node.id))
        if verdict.ok:
            self._fsm(node.app).mark_verified(node.id, verdict)
            for rnd in self.open_rounds:
                if rnd.subtask == subtask:
                    rnd.recovered = True
            self.open_rounds = [r for r in self.open_rounds if not r.recovered]
        self.journal.append(JournalEntry(index + 1, node.app, node.id, action, verdict, node.verified))
        self.trace.append(dataclasses.replace(record, state_after=node.id))
        self.state, self.state_subtask = node, next_subtask
        return verdict

    # -- recovery ----------------------------------------------------------

    def _main_upcoming(self, verdict: Verdict) -> str:
        if not verdict.ok or self.config.no_planner:
            return self.items[self.pos].subtask
        nxt = self.pos + 1
        return self.items[nxt].subtask if nxt < len(self.items) else FINISHED

    def _recover(self, subtask: str, verdict: Verdict) -> None:
        failures = 0
        while True:
            rnd = RecoveryRound(self.trace.steps[-1].index, subtask, verdict.reason, None)
            self.trace.recoveries.append(rnd)
            self.open_rounds.append(rnd)
            fsm = self._fsm(self.state.app)
            found = find_recovery_target(fsm, self.state.id, self.journal)
            if found is None:
                self._replan(f"no verified state to return to after: {verdict.reason}")
                return
            rnd.target = found.state_id
            rnd.target_verified = fsm.get(found.state_id).verified
            try:
                rplan = build_recovery_plan(
                    self.gateway, fsm, self.journal, found.state_id, verdict.reason,
                    current=self.state.id, path=found.path, subtask=subtask,
                    instruction=self.task.instruction,
                )
            except UnparsableRecovery:
                rplan = fallback_recovery_plan(fsm, self.state.id, found.state_id, found.path, subtask)
            rnd.steps = list(rplan.steps)
            steps = list(rplan.steps[rplan.steps.index(rplan.current_subtask):])
            outcome = self._run_recovery(steps, subtask)
            if outcome is None:
                if steps[-1] == subtask and not self.config.no_planner:
                    self.pos += 1
                return
            failures += 1
            verdict = outcome
            if failures >= self.config.recovery_failure_limit:
                self._replan(f"{failures} failures during recovery: {verdict.reason}")
                return

    def _run_recovery(self, steps: list[str], failed: str) -> Optional[Verdict]:
        """Execute recovery steps; the failing verdict, or None when all succeeded."""
        after_last = failed
        if steps[-1] == failed and not self.config.no_planner:
            after_last = (self.items[self.pos + 1].subtask if self.pos + 1 < len(self.items)
                          else FINISHED)
        for k, step in enumerate(steps):
            nxt = steps[k + 1] if k + 1 < len(steps) else after_last
            phase = "retry" if step == failed else "recovery"
            result = self._attempt(step, phase, lambda v, s=step, n=nxt: n if v.ok else s)
            if result is DONE:
                continue
            if not result.ok:
                return result
        return None

    # -- entry point ---------------------------------------------------------

    def _loop(self) -> None:
        self._observe()
        self._initial_plan()
        while self.pos < len(self.items):
            subtask = self.items[self.pos].subtask
            result = self._attempt(subtask, "main", self._main_upcoming)
            if result is DONE:
                break
            if result.ok:
                if not self.config.no_planner:
                    self.pos += 1
                continue
            self._recover(subtask, result)
        raise _Stop("success", "")

    def run(self) -> RunResult:
        try:
            self._loop()
        except _Stop as stop:
            self.trace.status, self.trace.reason = stop.status, stop.reason
        except MapleError as exc:
            log.warning("run stopped: %s", exc)
            self.trace.status, self.trace.reason = "terminated", f"{type(exc).__name__}: {exc}"
        delta = None
        if not self.config.no_mentor and self.store is not None:
            delta = retain(
                self.gateway, self.trace.steps, self.fsms.values(), self.trace.errors,
                instruction=self.task.instruction, apps=self.task.apps, status=self.trace.status,
            )
            self.store.merge(delta)
        world = getattr(self.device, "world", None)
        final = world.snapshot() if world is not None else None
        return RunResult(self.trace, self.fsms, self.journal, final, delta)


def orchestrate(task, gateway: Gateway, device, perceiver, config: AgentConfig = AgentConfig(),
                store: Optional[KnowledgeStore] = None) -> RunResult:
    return Orchestrator(task, gateway, device, perceiver, config, store).run()
