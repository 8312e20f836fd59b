from .actor import DONE, decide_action
from .knowledge import ActionSequence, Cue, KnowledgeBase, KnowledgeStore
from .mentor import retain
from .orchestrator import AgentConfig, Orchestrator, RunResult, orchestrate
from .planner import Planner
from .reflection import build_recovery_plan, fallback_recovery_plan, verify
from .state_agent import describe_state
from .types import Plan, PlanItem, RecoveryPlan, RecoveryRound, StepRecord, Trace

__all__ = [
    "ActionSequence", "AgentConfig", "Cue", "DONE", "KnowledgeBase", "KnowledgeStore",
    "Orchestrator", "Plan", "PlanItem", "Planner", "RecoveryPlan", "RecoveryRound", "RunResult",
    "StepRecord", "Trace", "build_recovery_plan", "decide_action", "describe_state",
    "fallback_recovery_plan", "orchestrate", "retain", "verify",
]
