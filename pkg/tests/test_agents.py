import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from maple.actions import Back, Enter, Home, OpenApp, Swipe, SwitchApp, Tap, Type, Wait
from maple.agents import (
    DONE, AgentConfig, KnowledgeBase, KnowledgeStore, Plan, PlanItem, Planner, RecoveryPlan,
    StepRecord, Trace, build_recovery_plan, decide_action, describe_state, fallback_recovery_plan,
    orchestrate, retain, verify,
)
from maple.agents.knowledge import ActionSequence, Cue
from maple.agents.reflection import parse_recovery
from maple.agents.toolbox import format_action, parse_call, to_action
from maple.clock import SimClock
from maple.device import SimDevice
from maple.errors import (
    AllCandidatesMalformed, ElementNotFound, MalformedResponse, NoActionParsed, Transport,
    UnparsableJudgment, UnparsableRecovery, UnparsableVerdict,
)
from maple.evalharness import load_suite
from maple.fsm import SYSTEM_APP, AppFsm, TaskJournal, UiState, find_recovery_target, state_id
from maple.llm import Gateway, ImagePart, ModelResponse, serialize_sections
from maple.perception import MockPerceiver, PerceptionResult, ScreenElement
from maple.runner import ModelSetup, golden, run_sim_task
from maple.sim import FaultPolicy, SimWorld
from maple.sim.oracle import OracleBackend, load_playbook
from maple.verdict import Outcome, Verdict

FIXTURES = Path(__file__).parent / "fixtures"


class Scripted:
    """Answers by tag: exact tag first, then the tag with its last dotted part dropped."""

    name = "scripted"

    def __init__(self, replies):
        self.replies = replies
        self.requests = []

    def send(self, req):
        self.requests.append(req)
        tag = req.tag
        while tag not in self.replies and "." in tag:
            tag = tag.rsplit(".", 1)[0]
        reply = self.replies[tag]
        if callable(reply):
            reply = reply(req)
        if isinstance(reply, Exception):
            raise reply
        return ModelResponse(reply, self.name)

    def tags(self, prefix=""):
        return [r.tag for r in self.requests if r.tag.startswith(prefix)]


def gateway(replies):
    backend = Scripted(replies)
    return Gateway(backend, sleep=lambda s: None), backend


def plan_text(*subtasks):
    body = "\n".join(f"{n}. {s} | because {n}" for n, s in enumerate(subtasks, 1))
    return serialize_sections({"Intent": "do it", "Plan": body})


def perception(*items):
    els = tuple(ScreenElement(k, c, b, conf) for k, c, b, conf in items)
    return PerceptionResult(els, (540, 1140), "mock", "shot")


WALMART = perception(("text", "Search Walmart", (20, 64, 420, 124), 1.0),
                     ("icon", "Cart", (440, 64, 520, 124), 1.0),
                     ("text", "Add to cart", (20, 900, 520, 980), 1.0))


# -- planner ------------------------------------------------------------------

CANDIDATES = {f"plan.candidate.{k}": plan_text(f"Open app {k}", f"Do thing {k}") for k in range(1, 6)}


def test_plan_returns_judged_candidate():
    gw, backend = gateway({**CANDIDATES, "plan.judge": "After weighing them, best: 2"})
    plan = Planner(gw).plan("Buy headphones", KnowledgeBase(), ["Walmart"])
    assert plan.subtasks == ["Open app 3", "Do thing 3"]
    assert plan.source == "fresh" and plan.items[0].rationale == "because 1"
    assert len(backend.tags("plan.candidate")) == 5 and backend.tags("plan.judge") == ["plan.judge"]
    assert {r.temperature for r in backend.requests if "candidate" in r.tag} == {0.7}


def test_plan_prompt_knowledge_block():
    gw, backend = gateway({**CANDIDATES, "plan.judge": "best: 0"})
    Planner(gw).plan("Buy headphones", KnowledgeBase(), ["Walmart"])
    assert "Knowledge from earlier tasks" not in backend.requests[0].prompt_text
    kb = KnowledgeBase([Cue("Close pop-ups first.", ("Walmart",))])
    gw, backend = gateway({**CANDIDATES, "plan.judge": "best: 0"})
    Planner(gw).plan("Buy headphones", kb, ["Walmart"])
    assert "Close pop-ups first." in backend.requests[0].prompt_text


def test_plan_skips_malformed_candidates():
    replies = {**CANDIDATES, "plan.candidate.1": "no sections at all", "plan.judge": "best: 0"}
    gw, _ = gateway(replies)
    assert Planner(gw).plan("x").subtasks == ["Open app 2", "Do thing 2"]


def test_plan_reprompts_once_then_gives_up():
    gw, backend = gateway({"plan.candidate": "garbage"})
    with pytest.raises(AllCandidatesMalformed):
        Planner(gw).plan("x")
    assert len(backend.tags("plan.candidate")) == 10
    assert len([t for t in backend.tags() if t.endswith(".retry1")]) == 5


def test_plan_transport_failures_are_per_slot():
    replies = {**CANDIDATES, "plan.candidate.2": Transport("boom", transient=False), "plan.judge": "best: 1"}
    gw, _ = gateway(replies)
    assert Planner(gw).plan("x").subtasks[0] == "Open app 3"


def test_single_plan_mode():
    gw, backend = gateway({"plan.candidate.1": plan_text("Only step")})
    assert Planner(gw, n=1).plan("x").subtasks == ["Only step"]
    assert backend.tags() == ["plan.candidate.1"]
    assert backend.requests[0].temperature == 0.0


def test_replan_uses_revision_prompt():
    replies = {f"replan.candidate.{k}": plan_text(f"Retry {k}") for k in range(1, 6)}
    gw, backend = gateway({**replies, "replan.judge": "best: 4"})
    plan = Planner(gw).plan("x", revision={"beacon": "Cart Page of Walmart", "app": "Walmart",
                                           "reason": "tap ignored", "history": "(none yet)"})
    assert plan.source == "revised" and plan.subtasks == ["Retry 5"]
    assert "Cart Page of Walmart" in backend.requests[0].prompt_text


def _plans(n):
    return [Plan((PlanItem(f"step {i}"),)) for i in range(n)]


def test_judge_single_candidate_no_call():
    gw, backend = gateway({})
    assert Planner(gw).judge(_plans(1), "rubric") == 0
    assert backend.requests == []


def test_judge_scripted_choice():
    gw, backend = gateway({"plan.judge": "best: 4"})
    assert Planner(gw).judge(_plans(5), "rubric") == 4
    prompt = backend.requests[0].prompt_text
    assert "Candidate 0:" in prompt and "Candidate 4:" in prompt


def test_judge_out_of_range():
    gw, backend = gateway({"plan.judge": "best: 7"})
    with pytest.raises(UnparsableJudgment):
        Planner(gw).judge(_plans(5), "rubric")
    assert backend.tags() == ["plan.judge", "plan.judge.retry"]


def test_judge_recovers_on_retry():
    gw, _ = gateway({"plan.judge": "I like the third", "plan.judge.retry": "best: 3"})
    assert Planner(gw).judge(_plans(5), "rubric") == 3


# -- state agent ------------------------------------------------------------------

def test_describe_state_walmart_fixture():
    reply = (FIXTURES / "state_agent_walmart.txt").read_text()
    gw, backend = gateway({"state": reply})
    node = describe_state(gw, WALMART, b"png", "Search for headphones", ["Cart Page of Walmart"],
                          instruction="Buy headphones")
    assert (node.app, node.beacon) == ("Walmart", "Homepage of Walmart")
    assert node.id == state_id("Walmart", "Homepage of Walmart")
    assert node.precondition.endswith("@screen(Walmart/search)")
    assert node.postcondition.endswith("@screen(Walmart/home)")
    prompt = backend.requests[0].prompt_text
    assert "- Cart Page of Walmart" in prompt and '"Add to cart"' in prompt
    assert any(isinstance(p, ImagePart) for p in backend.requests[0].messages[0].parts)


def _state_reply(app, beacon, conditions=True):
    sections = {"State Description": "d", "Predicted Next State": "n", "App Inference": app,
                "State Beacon": beacon}
    if conditions:
        sections.update({"Post-condition of Current State": "post",
                         "Pre-condition of Next State": "pre"})
    return serialize_sections(sections)


def test_describe_state_system_operation():
    gw, _ = gateway({"state": _state_reply("System Operation", "Home Screen")})
    assert describe_state(gw, WALMART, b"png", "Open Maps").app == SYSTEM_APP


def test_describe_state_beacon_reuse_modulo_whitespace():
    gw, _ = gateway({"state": _state_reply("Walmart", "  Homepage   of Walmart ")})
    node = describe_state(gw, WALMART, b"png", "s", ["Homepage of Walmart"])
    assert node.id == state_id("Walmart", "Homepage of Walmart")


def test_describe_state_retries_missing_headers():
    gw, backend = gateway({"state": "### State Beacon ###\nx", "state.retry": _state_reply("Maps", "Map View")})
    assert describe_state(gw, WALMART, b"png", "s").beacon == "Map View"
    assert "App Inference" in backend.requests[1].prompt_text


def test_describe_state_malformed_twice():
    gw, _ = gateway({"state": "nothing useful"})
    with pytest.raises(MalformedResponse):
        describe_state(gw, WALMART, b"png", "s")


def test_describe_state_without_conditions():
    gw, backend = gateway({"state": _state_reply("Maps", "Map View", conditions=False)})
    node = describe_state(gw, WALMART, b"png", "s", conditions=False)
    assert node.precondition == "" and node.postcondition == ""
    assert "Pre-condition of Next State" not in backend.requests[0].prompt_text


# -- actor ---------------------------------------------------------------------------

NODE = UiState("Walmart", "Item Detail Page in Walmart", "Product page")


def act(reply, p=WALMART, **extra):
    gw, backend = gateway({"actor": reply, **extra})
    return decide_action(gw, "Add the item", p, NODE, KnowledgeBase()), backend


def test_actor_tap_by_label():
    action, _ = act(serialize_sections({"Thought": "t", "Action": "Tap('Add to cart')"}))
    assert action == Tap(270, 940) and action.label == "Add to cart"


def test_actor_open_app():
    action, _ = act("### Action ###\nOpen_App('Maps')")
    assert action == OpenApp("Maps")


def test_actor_absent_element():
    with pytest.raises(ElementNotFound):
        act("### Action ###\nTap('Checkout')")


def test_actor_done():
    assert act("### Action ###\nDone()")[0] is DONE


def test_actor_reprompts_once():
    action, backend = act("I am not sure", **{"actor.retry": "### Action ###\nBack()"})
    assert action == Back() and backend.tags() == ["actor", "actor.retry"]
    with pytest.raises(NoActionParsed):
        act("I am not sure", **{"actor.retry": "still unsure"})


@pytest.mark.parametrize("text,want", [
    ("Tap(10, 20)", Tap(10, 20)), ("Type('Buy milk')", Type("Buy milk")), ("Enter()", Enter()),
    ("Back()", Back()), ("Open_App(\"Notes\")", OpenApp("Notes")), ("Swipe(1, 2, 3, 4)", Swipe(1, 2, 3, 4)),
    ("Switch_App()", SwitchApp()), ("Home()", Home()), ("Wait()", Wait()),
    ("`Tap(10, 20)`", Tap(10, 20)),
])
def test_toolbox_parse(text, want):
    assert to_action(parse_call(text)) == want


@pytest.mark.parametrize("text", ["Tap()", "Type(3)", "Swipe(1, 2)", "Back(1)", "Tap(x)", "Jump()"])
def test_toolbox_rejects(text):
    assert parse_call(text) is None


@given(st.one_of(
    st.builds(Tap, st.integers(0, 2000), st.integers(0, 2000)),
    st.builds(Type, st.text(min_size=1).filter(lambda s: "\n" not in s and "\r" not in s)),
    st.builds(OpenApp, st.text(min_size=1).filter(lambda s: s.strip() and "\n" not in s and "\r" not in s)),
    st.builds(Swipe, *[st.integers(0, 2000)] * 4),
    st.sampled_from([Enter(), Back(), Home(), SwitchApp(), Wait()]),
))
def test_toolbox_round_trip(action):
    assert to_action(parse_call(format_action(action))) == action


# -- reflection ------------------------------------------------------------------------

PREV = UiState("Notes", "Notes List in Notes", "List of notes", predicted_next="Editor",
               postcondition="@screen(Notes/editor)", precondition="")
OTHER = perception(("text", "Note:", (20, 64, 420, 124), 1.0))


def check(shots_same, reply=None, checker=None):
    gw, backend = gateway({"reflect": reply} if reply else {})
    p_new = WALMART if shots_same else OTHER
    v = verify(gw, PREV, PREV.precondition, WALMART, p_new, (b"a", b"b"), "Tap 'New note'",
               Tap(5, 5, label="New note"), KnowledgeBase(), checker=checker)
    return v, backend


def test_verify_unchanged_and_unmet_is_nochange():
    v, backend = check(True, checker=lambda text: False)
    assert v.outcome is Outcome.NO_CHANGE and v.reason
    assert backend.requests == []


def test_verify_condition_met_short_circuits():
    v, backend = check(False, checker=lambda text: True)
    assert v == Verdict.success() and backend.requests == []


def test_verify_scripted_success():
    v, backend = check(False, serialize_sections({"Outcome": "Success", "Reason": ""}))
    assert v.ok and v.reason == ""
    images = [p for p in backend.requests[0].messages[0].parts if isinstance(p, ImagePart)]
    assert [i.data for i in images] == [b"a", b"b"]
    assert "@screen(Notes/editor)" in backend.requests[0].prompt_text


def test_verify_scripted_fail():
    v, _ = check(False, serialize_sections({"Outcome": "Fail", "Reason": "wrong screen"}))
    assert v == Verdict.fail("wrong screen")


def test_verify_changed_but_unmet_asks_model():
    v, backend = check(False, serialize_sections({"Outcome": "NoChange", "Reason": "same"}),
                       checker=lambda text: False)
    assert v.outcome is Outcome.NO_CHANGE and backend.tags() == ["reflect"]


def test_verify_unparsable():
    with pytest.raises(UnparsableVerdict):
        check(False, "### Outcome ###\nMaybe")


# -- recovery --------------------------------------------------------------------------

def maps_fsm():
    fsm = AppFsm("Maps")
    ids = [fsm.upsert_state(UiState("Maps", b, first_seen_step=i, last_seen_step=i))
           for i, b in enumerate(["Homepage of Maps", "Search Results of Maps", "Place Page of Maps"])]
    fsm.record_transition(ids[0], Tap(10, 10, label="Search"), ids[1], step=1)
    fsm.record_transition(ids[1], Tap(20, 200, label="Store"), ids[2], step=2)
    for sid in ids[:2]:
        fsm.mark_verified(sid, Verdict.success())
    return fsm, ids


def test_recovery_fixture_round_trip():
    fsm, ids = maps_fsm()
    reply = (FIXTURES / "recovery_maps.json").read_text()
    gw, backend = gateway({"recover": f"Here is the plan:\n```json\n{reply}\n```"})
    found = find_recovery_target(fsm, ids[2])
    rp = build_recovery_plan(gw, fsm, TaskJournal(), found.state_id, "wrong tap", current=ids[2],
                             path=found.path, subtask="Copy the address")
    assert rp.goal.startswith("Return to the search results page")
    assert len(rp.steps) == 2 and rp.current_subtask == rp.steps[0]
    assert rp.target == ids[1]
    prompt = backend.requests[0].prompt_text
    assert "Search Results of Maps" in prompt and "wrong tap" in prompt


def test_recovery_target_is_current():
    fsm, ids = maps_fsm()
    gw, backend = gateway({})
    rp = build_recovery_plan(gw, fsm, TaskJournal(), ids[1], "x", current=ids[1], subtask="Tap 'Store'")
    assert rp.steps == ("Tap 'Store'",) and backend.requests == []


def test_recovery_missing_current_subtask():
    fsm, ids = maps_fsm()
    doc = json.loads((FIXTURES / "recovery_maps.json").read_text())
    del doc["current_subtask"]
    gw, backend = gateway({"recover": json.dumps(doc)})
    with pytest.raises(UnparsableRecovery):
        build_recovery_plan(gw, fsm, TaskJournal(), ids[1], "x", current=ids[2], subtask="s")
    assert backend.tags() == ["recover", "recover.retry"]


@pytest.mark.parametrize("text", ["no json", '{"plan": [], "current_subtask": "a"}',
                                  '{"plan": ["a", 3], "current_subtask": "a"}', '{"plan": ["a"'])
def test_parse_recovery_rejects(text):
    with pytest.raises(UnparsableRecovery):
        parse_recovery(text, "t")


def test_fallback_plan_walks_back():
    fsm, ids = maps_fsm()
    found = find_recovery_target(fsm, ids[2])
    rp = fallback_recovery_plan(fsm, ids[2], found.state_id, found.path, "Copy the address")
    assert rp.steps == ("Press Back to return to Search Results of Maps", "Copy the address")
    assert isinstance(rp, RecoveryPlan)


# -- mentor and knowledge ----------------------------------------------------------------

def _trace():
    tap = Tap(30, 94, label="New note")
    return [StepRecord(0, "main", "Open Notes", OpenApp("Notes"), Verdict.success(), "a", "b", "", "", "", "", 0.0),
            StepRecord(1, "main", "Tap 'New note'", tap, Verdict.success(), "b", "c", "", "", "", "", 0.0)]


MENTOR_REPLY = json.dumps({
    "guidance_cues": ["Open Notes from the home screen.", "Save before leaving the editor."],
    "action_sequences": [{"precondition": "Home screen showing", "label": "new note",
                          "actions": ["Open_App('Notes')", "Tap('New note')"]}],
})


def test_mentor_scripted_reply():
    fsm, _ = maps_fsm()
    gw, backend = gateway({"mentor": MENTOR_REPLY})
    delta = retain(gw, _trace(), [fsm], [], instruction="Write a note", apps=["Notes"], status="success")
    assert [c.text for c in delta.cues] == ["Open Notes from the home screen.", "Save before leaving the editor."]
    [seq] = delta.sequences
    assert seq.actions == (OpenApp("Notes"), Tap(30, 94)) and seq.label == "new note"
    assert delta.fsms == {"Maps": fsm}
    assert "[main] Tap 'New note' => Tap('New note') => Success" in backend.requests[0].prompt_text


def test_mentor_error_free_keeps_fsms():
    fsm, _ = maps_fsm()
    gw, _ = gateway({"mentor": "{}"})
    delta = retain(gw, _trace(), [fsm], [])
    assert delta.cues == [] and list(delta.fsms.values()) == [fsm]


def test_mentor_failure_still_stores_fsms(caplog):
    fsm, _ = maps_fsm()
    gw, _ = gateway({"mentor": Transport("down", transient=False)})
    delta = retain(gw, _trace(), [fsm], [(1, Verdict.no_change("same screen"))])
    assert delta.fsms == {"Maps": fsm} and delta.cues == []
    assert "storing FSMs only" in caplog.text


def test_store_dedups_cues(tmp_path):
    store = KnowledgeStore(tmp_path / "kb.json")
    assert store.load().empty and store.digest() is None
    fsm, _ = maps_fsm()
    for _ in range(2):
        gw, _ = gateway({"mentor": MENTOR_REPLY})
        store.merge(retain(gw, _trace(), [fsm], [], apps=["Notes"]))
    kb = store.load()
    assert kb.counts() == "2 cues, 1 sequences, 1 fsms"
    assert kb.fsms["Maps"] == fsm
    store.clear()
    assert store.load().counts() == "0 cues, 0 sequences, 0 fsms"


def test_knowledge_selection_by_app():
    fsm, _ = maps_fsm()
    kb = KnowledgeBase([Cue("maps tip", ("Maps",)), Cue("notes tip", ("Notes",))],
                       [ActionSequence("p", (Back(),), "l", ("Notes",))], {"Maps": fsm})
    picked = kb.select(["maps"])
    assert [c.text for c in picked.cues] == ["maps tip"]
    assert picked.sequences == [] and list(picked.fsms) == ["Maps"]
    assert "Homepage of Maps" in picked.beacons()
    assert KnowledgeBase.from_dict(json.loads(json.dumps(kb.to_dict()))) == kb


# -- orchestrator --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def suite():
    return {t.task_id: t for t in load_suite(golden("suite"))}


def oracle_run(task, world_spec, faults=FaultPolicy(), config=AgentConfig(), store=None):
    world = SimWorld(world_spec, faults)
    clock = SimClock()
    gw = Gateway(OracleBackend(load_playbook(golden("playbook")), world), sleep=clock.sleep, clock=clock.now)
    result = orchestrate(task, gw, SimDevice(world, clock), MockPerceiver(), config, store)
    return result, gw, world


def test_orchestrate_clean_run(suite, world_spec):
    result, gw, world = oracle_run(suite["notes_buy_milk"], world_spec)
    trace = result.trace
    assert trace.status == "success"
    assert len(trace.plans[0]) == 4
    assert all(s.verdict.ok for s in trace.steps)
    assert len(trace.steps) == world.step_count
    fsm = result.fsms["notes"]
    assert all(fsm.get(s.state_after).verified for s in trace.steps if s.state_after in fsm.states)
    assert result.final_state["vars"]["notes_saved"] == 1


def test_orchestrate_noop_fault(suite, world_spec):
    result, _, world = oracle_run(suite["notes_buy_milk"], world_spec, FaultPolicy(noop_taps={0}))
    trace = result.trace
    assert [s.verdict.outcome for s in trace.steps].count(Outcome.NO_CHANGE) == 1
    assert len(trace.recoveries) == 1 and trace.recoveries[0].recovered
    assert trace.recoveries[0].target_verified
    assert any(s.phase == "retry" for s in trace.steps)
    assert trace.status == "success" and trace.replans == 0


def test_orchestrate_double_failure_replans_once(suite, world_spec):
    result, gw, _ = oracle_run(suite["notes_buy_milk"], world_spec, FaultPolicy(noop_taps={0, 1, 2}))
    assert result.trace.replans == 1
    assert len(gw.calls("replan.judge")) == 1 and len(gw.calls("replan.candidate")) == 5
    assert result.trace.plans[-1].source == "revised"
    assert result.trace.status == "success"


def test_orchestrate_replan_cap(suite, world_spec):
    result, gw, _ = oracle_run(suite["notes_buy_milk"], world_spec,
                               FaultPolicy(noop_taps=frozenset(range(30))), AgentConfig(max_replans=1))
    assert result.trace.status == "terminated"
    assert result.trace.replans == 1
    assert "replans" in result.trace.reason


def test_orchestrate_budget(suite, world_spec):
    result, _, _ = oracle_run(suite["walmart_checkout"], world_spec, config=AgentConfig(budget=3))
    assert result.trace.status == "step-budget-exhausted" and len(result.trace.steps) == 3


def test_orchestrate_errors_become_status(world_spec):
    task = load_suite(golden("suite"))[0]
    world = SimWorld(world_spec)
    gw = Gateway(Scripted({"plan": plan_text("Tap the ghost"), "state": _state_reply("System Operation", "Home Screen"),
                           "actor": "### Action ###\nTap('Ghost')"}), sleep=lambda s: None)
    result = orchestrate(task, gw, SimDevice(world), MockPerceiver(), AgentConfig(single_plan=True))
    assert result.trace.status == "terminated" and "ElementNotFound" in result.trace.reason


def test_orchestrate_mentor_writes_store(suite, world_spec, tmp_path):
    store = KnowledgeStore(tmp_path / "kb.json")
    oracle_run(suite["notes_buy_milk"], world_spec, store=store)
    kb = store.load()
    assert "notes" in {k.casefold() for k in kb.fsms} and kb.cues
    before = store.digest()
    oracle_run(suite["notes_buy_milk"], world_spec, config=AgentConfig(no_mentor=True), store=store)
    assert store.digest() == before


def test_orchestrate_deterministic(suite, world_spec):
    a = run_sim_task(suite["maps_directions"], world_spec, ModelSetup("replay", golden("archive")))
    b = run_sim_task(suite["maps_directions"], world_spec, ModelSetup("replay", golden("archive")))
    assert [s.to_dict() for s in a.result.trace.steps] == [s.to_dict() for s in b.result.trace.steps]
    assert a.status == "success"


def test_trace_indices_increase():
    trace = Trace("t")
    rec = _trace()[0]
    trace.append(rec)
    with pytest.raises(ValueError):
        trace.append(rec)
