import json
from pathlib import Path

import pytest

from seqbench.agents import NoisyAgent, OracleAgent, RandomAgent
from seqbench.envs import EnvKind, Mode
from seqbench.prompts import render_system_prompt
from seqbench.runner import (
    EXAMPLE_MARKER,
    LIVE_MARKER,
    AgentTransportError,
    DonorError,
    Protocol,
    RunConfig,
    build_context,
    make_ice_episodes,
    parse_action,
    run_episode,
    run_testset,
)
from seqbench.testgen import gen_case, generate_testset
from seqbench.transcript import Transcript

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("raw, lenient, strict", json.loads((GOLDEN / "parse.json").read_text()))
def test_parse_action_golden(raw, lenient, strict):
    assert parse_action(raw) == lenient
    assert parse_action(raw, strict=True) == strict


def test_run_config_protocols():
    assert RunConfig().protocol is Protocol.ZERO_SHOT
    assert RunConfig(ice=2).protocol is Protocol.IN_CONTEXT
    assert RunConfig(ice=2, teacher_guided=True).protocol is Protocol.TEACHER_GUIDED
    with pytest.raises(ValueError):
        RunConfig(ice=-1)
    case = gen_case(0, Mode.HARD, EnvKind.DFS)
    assert RunConfig().budget_for(case) == 30
    assert RunConfig(budget=5).budget_for(case) == 5


class Scripted:
    def __init__(self, replies):
        self.replies = list(replies)
        self.seen = []

    def respond(self, messages):
        self.seen.append(messages)
        return self.replies.pop(0)


def test_zero_shot_context(small_dfs_case):
    agent = Scripted(["1", "go to 3", "9"])
    t = run_episode(agent, small_dfs_case)
    first, third = agent.seen[0], agent.seen[2]
    assert first == [
        {"role": "system", "content": render_system_prompt(small_dfs_case)},
        {"role": "user", "content": "You are now in node 0. Adjacent nodes: 1, 2."},
    ]
    assert [m["role"] for m in third] == ["system", "user", "assistant", "user", "assistant", "user"]
    assert third[4]["content"] == "go to 3"  # raw reply, verbatim
    assert t.reason == "invalid_response" and len(t.steps) == 3
    assert [s.valid for s in t.steps] == [True, True, False]
    assert t.steps[2].committed is None


def test_guess_context_starts_with_system_only(guess_case):
    agent = Scripted(["16416"])
    run_episode(agent, guess_case, RunConfig(budget=1))
    assert [m["role"] for m in agent.seen[0]] == ["system"]


def test_teacher_guided_shows_oracle_history(small_dfs_case):
    agent = Scripted(["2", "2", "1", "0", "0"])
    t = run_episode(agent, small_dfs_case, RunConfig(teacher_guided=True))
    assert t.committed() == [1, 3, 1, 0, 2]
    assert [s.follow for s in t.steps] == [True, False, True, True, False]
    # proposals are scored, but the conversation shows the oracle's moves
    assistant = [m["content"] for m in agent.seen[-1] if m["role"] == "assistant"]
    assert assistant == ["1", "3", "1", "0"]
    assert t.reason == "solved"


def test_teacher_guided_stops_at_budget():
    case = gen_case(4, Mode.EASY, EnvKind.DFS)
    t = run_episode(OracleAgent(), case, RunConfig(teacher_guided=True, budget=3))
    assert len(t.steps) == 3


def test_ice_context_layout():
    ts = generate_testset(EnvKind.BFS, Mode.EASY, 1, count=5)
    live = ts.cases[0]
    eps = make_ice_episodes(ts, 2, exclude=live)
    msgs = build_context(live, [], eps)
    users = [m["content"] for m in msgs if m["role"] == "user"]
    assert users[0].startswith(EXAMPLE_MARKER + "\nYou are now in node 0.")
    assert sum(u.count(EXAMPLE_MARKER) for u in users) == 2
    assert users[-1].startswith(users[-1].split("\n")[0])
    assert LIVE_MARKER + "\nYou are now in node 0." in users[-1]
    # no two user messages are adjacent
    roles = [m["role"] for m in msgs]
    assert all(not (a == b == "user") for a, b in zip(roles, roles[1:]))


def test_ice_rejects_live_case_and_foreign_donors():
    ts = generate_testset(EnvKind.DFS, Mode.EASY, 1, count=3)
    live = ts.cases[0]
    with pytest.raises(DonorError):
        build_context(live, [], make_ice_episodes(ts.cases, 1))
    with pytest.raises(DonorError):
        make_ice_episodes(ts, 3, exclude=live)
    with pytest.raises(DonorError):
        make_ice_episodes([gen_case(1, Mode.HARD, EnvKind.DFS)], 1, exclude=live)


def test_ice_renders_in_live_skin():
    ts = generate_testset(EnvKind.CAVE_DFS, Mode.EASY, 1, count=3)
    msgs = build_context(ts.cases[0], [], make_ice_episodes(ts, 2, exclude=ts.cases[0]))
    text = "\n".join(m["content"] for m in msgs if m["role"] == "user")
    assert "cave" in text and "node" not in text


class Flaky:
    def __init__(self, fail_at):
        self.calls, self.fail_at = 0, fail_at

    def respond(self, messages):
        self.calls += 1
        if self.calls == self.fail_at:
            raise AgentTransportError("connection reset")
        return "1"


def test_transport_error_aborts_episode(small_dfs_case):
    t = run_episode(Flaky(2), small_dfs_case)
    assert t.aborted and t.error == "connection reset"
    assert len(t.steps) == 1 and t.reason is None


def test_parallel_run_matches_serial():
    ts = generate_testset(EnvKind.GUESS_NUM, Mode.EASY, 3, count=30)
    agent = NoisyAgent(9, 0.6)
    serial = run_testset(agent, ts)
    parallel = run_testset(agent, ts, parallelism=8)
    assert [t.core() for t in serial] == [t.core() for t in parallel]


def test_transcript_persistence_and_chain(tmp_path):
    case = gen_case(2, Mode.EASY, EnvKind.BFS)
    t = run_episode(RandomAgent(3), case, RunConfig(ice=1), donors=[gen_case(9, Mode.EASY, EnvKind.BFS)])
    assert t.verify_chain()
    path = tmp_path / "t.jsonl"
    t.save(path)
    again = Transcript.load(path)
    assert again.core() == t.core() and again.verify_chain()
    assert again.to_jsonl() == t.to_jsonl()
    tampered = path.read_text().replace('"valid":true', '"valid":false', 1)
    assert not Transcript.from_jsonl(tampered).verify_chain()


def test_context_digest_recorded(small_dfs_case):
    t = run_episode(OracleAgent(), small_dfs_case)
    digests = [s.context_digest for s in t.steps]
    assert all(len(d) == 64 for d in digests) and len(set(digests)) == len(digests)
