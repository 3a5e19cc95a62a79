"""Drive episodes: build the conversation, query the agent, step the env.

Three protocols are supported:

* zero-shot: the agent sees the system prompt and the live episode only;
* in-context (``ice=k``): ``k`` oracle-played episodes from other cases of
  the same test set are placed before the live episode, each opened by
  :data:`EXAMPLE_MARKER`, and the live episode is opened by
  :data:`LIVE_MARKER`;
* teacher-guided: at every step the agent's proposal is scored, then the
  oracle's action is committed instead, and earlier agent turns are shown
  as the oracle's actions.
"""

from __future__ import annotations

import enum
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from seqbench import oracle
from seqbench.envs import (
    MODE_PARAMS,
    EnvKind,
    TestCase,
    invalidate,
    is_valid,
    reset,
    step,
)
from seqbench.prompts import render_feedback, render_system_prompt
from seqbench.transcript import StepRecord, Transcript, sha256_text

logger = logging.getLogger(__name__)

EXAMPLE_MARKER = "=== Example episode ==="
LIVE_MARKER = "=== Current episode ==="

_LENIENT_INT = re.compile(r"(?:(?<![\w.])[-+])?(?:\d{1,3}(?:,\d{3})+(?!\d)|\d+)")
_STRICT_INT = re.compile(r"\s*[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)\s*\.?\s*")


class AgentTransportError(RuntimeError):
    """The agent could not be reached or answered with a malformed body."""


class DonorError(ValueError):
    pass


def parse_action(raw: str, kind: EnvKind | None = None, strict: bool = False) -> int | None:
    """First integer token in ``raw`` (comma grouping allowed), or None.

    With ``strict=True`` the whole reply must be a single integer.
    """
    if strict:
        if not _STRICT_INT.fullmatch(raw or ""):
            return None
        token = raw.strip().rstrip(".").strip()
    else:
        m = _LENIENT_INT.search(raw or "")
        if m is None:
            return None
        token = m.group(0)
    return int(token.replace(",", ""))


class Protocol(str, enum.Enum):
    ZERO_SHOT = "zero-shot"
    IN_CONTEXT = "in-context"
    TEACHER_GUIDED = "teacher-guided"


@dataclass(frozen=True)
class RunConfig:
    ice: int = 0
    teacher_guided: bool = False
    budget: int | None = None
    strict_parse: bool = False

    def __post_init__(self):
        if self.ice < 0:
            raise ValueError("ice must be non-negative")

    @property
    def protocol(self) -> Protocol:
        if self.teacher_guided:
            return Protocol.TEACHER_GUIDED
        return Protocol.IN_CONTEXT if self.ice else Protocol.ZERO_SHOT

    def budget_for(self, case: TestCase) -> int:
        return self.budget if self.budget is not None else MODE_PARAMS[case.mode].budget

    def to_dict(self) -> dict:
        return {"ice": self.ice, "teacher_guided": self.teacher_guided,
                "budget": self.budget, "strict_parse": self.strict_parse,
                "protocol": self.protocol.value}


@dataclass(frozen=True)
class IceEpisode:
    case: TestCase
    opening: str
    turns: tuple[tuple[int, str], ...]


def play_oracle_episode(case: TestCase, kind: EnvKind | None = None) -> IceEpisode:
    kind = kind or case.kind
    state, obs = reset(case, budget=10**9)
    opening = render_feedback(obs, kind)
    turns = []
    while not state.terminated:
        action = oracle.optimal_action(state)
        outcome = step(state, action)
        turns.append((action, render_feedback(outcome.observation, kind)))
    return IceEpisode(case, opening, tuple(turns))


def make_ice_episodes(donors, k: int, exclude: TestCase | None = None,
                      kind: EnvKind | None = None) -> list[IceEpisode]:
    """Oracle-played renderings of the first ``k`` donor cases other than ``exclude``."""
    if k == 0:
        return []
    cases = list(getattr(donors, "cases", donors))
    skip = exclude.content_key() if exclude is not None else None
    if exclude is not None:
        for c in cases:
            if c.kind.family is not exclude.kind.family or c.mode is not exclude.mode:
                raise DonorError("donor cases must share the live case's environment and mode")
    picked = [c for c in cases if c.content_key() != skip][:k]
    if len(picked) < k:
        raise DonorError(f"need {k} donor cases distinct from the live case, have {len(picked)}")
    return [play_oracle_episode(c, kind or (exclude.kind if exclude else c.kind)) for c in picked]


def build_context(case: TestCase, history, ice_episodes=(), teacher_guided: bool = False,
                  opening: str | None = None, system_prompt: str | None = None) -> list[dict]:
    """Message list for the next agent turn.

    ``history`` holds the live episode's :class:`StepRecord` objects so far.
    Consecutive environment texts are joined into one user message.
    """
    for ep in ice_episodes:
        if ep.case.content_key() == case.content_key():
            raise DonorError("the live case appears among the in-context examples")
    messages = [{"role": "system", "content": system_prompt or render_system_prompt(case)}]
    pending: list[str] = []

    def flush():
        if pending:
            messages.append({"role": "user", "content": "\n".join(pending)})
            pending.clear()

    def say(text: str):
        flush()
        messages.append({"role": "assistant", "content": text})

    for ep in ice_episodes:
        pending.append(EXAMPLE_MARKER)
        if ep.opening:
            pending.append(ep.opening)
        for action, feedback in ep.turns:
            say(str(action))
            pending.append(feedback)
    if ice_episodes:
        pending.append(LIVE_MARKER)
    if opening is None:
        opening = render_feedback(reset(case, budget=1)[1], case.kind)
    if opening:
        pending.append(opening)
    for rec in history:
        say(str(rec.committed) if teacher_guided else rec.raw)
        if rec.observation:
            pending.append(rec.observation)
    flush()
    return messages


def context_digest(messages: list[dict]) -> str:
    return sha256_text(json.dumps(messages, sort_keys=True, separators=(",", ":"), ensure_ascii=False))


@dataclass
class Submission:
    valid: bool
    observation: str
    terminated: bool
    reason: str | None
    follow: bool | None


class LocalEpisode:
    """In-process episode backend."""

    def __init__(self, case: TestCase, budget: int):
        self.case = case
        self.state, obs = reset(case, budget)
        self.system_prompt = render_system_prompt(case)
        self.opening = render_feedback(obs, case.kind)

    def submit(self, action: int | None, raw: str) -> Submission:
        follow = oracle.is_following(self.state, action)
        outcome = invalidate(self.state) if action is None else step(self.state, action)
        text = render_feedback(outcome.observation, self.case.kind) if outcome.observation else ""
        reason = outcome.reason.value if outcome.reason else None
        return Submission(outcome.valid, text, outcome.terminated, reason, follow)


def _ask(agent, messages):
    t0 = time.perf_counter()
    raw = agent.respond(messages)
    return raw, time.perf_counter() - t0


def run_free_play(agent, backend, case: TestCase, config: RunConfig, ice_episodes=(),
                  label: str = "") -> Transcript:
    """Zero-shot / in-context loop over any backend with ``submit``."""
    budget = config.budget_for(case)
    t = Transcript(case, config.protocol.value, budget, label, config.ice)
    while True:
        messages = build_context(case, t.steps, ice_episodes, opening=backend.opening,
                                 system_prompt=backend.system_prompt)
        try:
            raw, elapsed = _ask(agent, messages)
        except AgentTransportError as exc:
            t.aborted, t.error = True, str(exc)
            logger.warning("episode aborted (case seed %d): %s", case.seed, exc)
            return t
        action = parse_action(raw, case.kind, config.strict_parse)
        sub = backend.submit(action, raw)
        t.append(StepRecord(
            index=len(t.steps) + 1, raw=raw, action=action, valid=sub.valid,
            follow=bool(sub.follow), committed=action if sub.valid else None,
            observation=sub.observation, context_digest=context_digest(messages), elapsed=elapsed,
        ))
        if sub.terminated:
            t.reason = sub.reason
            return t


def run_teacher_guided(agent, case: TestCase, config: RunConfig, ice_episodes=(),
                       label: str = "") -> Transcript:
    budget = config.budget_for(case)
    t = Transcript(case, Protocol.TEACHER_GUIDED.value, budget, label, config.ice)
    state, obs = reset(case, budget)
    opening = render_feedback(obs, case.kind)
    plan = oracle.optimal_trajectory(case)
    for k in range(min(len(plan), budget)):
        messages = build_context(case, t.steps, ice_episodes, teacher_guided=True, opening=opening)
        try:
            raw, elapsed = _ask(agent, messages)
        except AgentTransportError as exc:
            t.aborted, t.error = True, str(exc)
            return t
        action = parse_action(raw, case.kind, config.strict_parse)
        valid = action is not None and is_valid(state, action)
        follow = oracle.is_following(state, action)
        outcome = step(state, plan[k])
        t.append(StepRecord(
            index=k + 1, raw=raw, action=action, valid=valid, follow=follow, committed=plan[k],
            observation=render_feedback(outcome.observation, case.kind),
            context_digest=context_digest(messages), elapsed=elapsed,
        ))
    t.reason = state.reason.value if state.reason else None
    return t


def run_episode(agent, case: TestCase, config: RunConfig = RunConfig(), donors=None,
                label: str | None = None) -> Transcript:
    label = label if label is not None else getattr(agent, "label", type(agent).__name__)
    if hasattr(agent, "fork"):
        agent = agent.fork(case.seed)
    ice = make_ice_episodes(donors, config.ice, exclude=case) if config.ice else []
    if config.teacher_guided:
        return run_teacher_guided(agent, case, config, ice, label)
    return run_free_play(agent, LocalEpisode(case, config.budget_for(case)), case, config, ice, label)


def run_testset(agent, testset, config: RunConfig = RunConfig(), parallelism: int = 1,
                donors=None, label: str | None = None) -> list[Transcript]:
    """Run every case; results are returned in case order regardless of completion order."""
    cases = list(getattr(testset, "cases", testset))
    if config.ice and donors is None:
        donors = cases
    if parallelism <= 1:
        return [run_episode(agent, c, config, donors, label) for c in cases]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda c: run_episode(agent, c, config, donors, label), cases))
