"""Agents: anything with ``respond(messages) -> str``.

Scripted agents never look at environment internals.  They rebuild what
they know from the conversation text (system prompt, feedback strings,
their own earlier replies), the same channel a language model gets.
Randomised agents derive a fresh generator from ``(seed, episode,
conversation)`` on every call, so a reply depends only on those three.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from seqbench.envs import Comparison, EnvKind, Family
from seqbench.prompts import identify_kind, parse_bounds, parse_feedback
from seqbench.runner import LIVE_MARKER, AgentTransportError, parse_action

logger = logging.getLogger(__name__)


@dataclass
class View:
    """What an agent can infer about the live episode from the text so far."""

    kind: EnvKind
    steps: int = 0
    # guessing
    low: int = 0
    high: int = 0
    lo: int = 0
    hi: int = 0
    # graph
    current: int = 0
    adjacency: dict[int, tuple[int, ...]] = field(default_factory=dict)
    visited: set[int] = field(default_factory=lambda: {0})
    parent: dict[int, int | None] = field(default_factory=lambda: {0: None})
    depth: dict[int, int] = field(default_factory=lambda: {0: 0})

    def observe_graph(self, node: int, adjacent: tuple[int, ...]) -> None:
        if node not in self.visited:
            self.visited.add(node)
            # In a tree the first visited neighbour is the discovering node.
            known = [n for n in adjacent if n in self.adjacency]
            via = self.current if self.kind.family is Family.DFS else (known[0] if known else self.current)
            self.parent[node] = via
            self.depth[node] = self.depth.get(via, 0) + 1
        self.adjacency[node] = adjacent
        self.current = node

    def frontier(self) -> list[int]:
        return sorted({n for v in self.visited for n in self.adjacency.get(v, ()) if n not in self.visited})

    def valid_actions(self) -> list[int] | range:
        family = self.kind.family
        if family is Family.GUESS:
            return range(self.low, self.high + 1)
        if family is Family.DFS:
            return list(self.adjacency.get(self.current, ()))
        return self.frontier()

    def following(self) -> list[int]:
        family = self.kind.family
        if family is Family.GUESS:
            return [(self.lo + self.hi) // 2] if self.lo <= self.hi else []
        if family is Family.DFS:
            fresh = [n for n in self.adjacency.get(self.current, ()) if n not in self.visited]
            if fresh:
                return sorted(fresh)
            back = self.parent.get(self.current)
            return [] if back is None else [back]
        front = self.frontier()
        if not front:
            return []
        # frontier nodes hang off exactly one visited node in a tree
        def d(n):
            return 1 + min(self.depth[v] for v in self.visited if n in self.adjacency.get(v, ()))
        best = min(d(n) for n in front)
        return [n for n in front if d(n) == best]


def read_view(messages: list[dict]) -> View:
    system = messages[0]["content"]
    kind = identify_kind(system)
    view = View(kind)
    if kind.family is Family.GUESS:
        view.low, view.high = parse_bounds(system)
        view.lo, view.hi = view.low, view.high

    # locate the start of the live episode
    start, offset = 1, 0
    for i in range(len(messages) - 1, 0, -1):
        pos = messages[i]["content"].find(LIVE_MARKER)
        if messages[i]["role"] == "user" and pos >= 0:
            start, offset = i, pos + len(LIVE_MARKER)
            break

    last_action = None
    for i in range(start, len(messages)):
        role, content = messages[i]["role"], messages[i]["content"]
        if i == start and offset:
            content = content[offset:]
        if role == "assistant":
            view.steps += 1
            last_action = parse_action(content, kind)
            continue
        for chunk in _feedback_chunks(content):
            obs = parse_feedback(chunk, kind)
            if kind.family is Family.GUESS:
                if obs.comparison is None or last_action is None:
                    continue
                g = last_action
                if obs.comparison is Comparison.TARGET_BIGGER:
                    view.lo = max(view.lo, g + 1)
                elif obs.comparison is Comparison.TARGET_LOWER:
                    view.hi = min(view.hi, g - 1)
                else:
                    view.lo = view.hi = g
            else:
                view.observe_graph(obs.node, obs.adjacent)
    return view


def _feedback_chunks(content: str):
    """Split a user message into feedback strings (terminal marker stays attached)."""
    chunks: list[str] = []
    for line in content.split("\n"):
        if not line.strip():
            continue
        if chunks and line.startswith("<"):
            chunks[-1] += "\n" + line
        else:
            chunks.append(line)
    return chunks


def _digest(messages) -> int:
    blob = json.dumps(messages, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


class ScriptedAgent:
    label = "scripted"

    def respond(self, messages: list[dict]) -> str:
        return str(self.act(read_view(messages), messages))

    def act(self, view: View, messages):
        raise NotImplementedError


def oracle_choice(view: View) -> int:
    options = view.following()
    if options:
        return min(options)
    valid = list(view.valid_actions())
    return valid[0] if valid else view.current


class OracleAgent(ScriptedAgent):
    label = "oracle"

    def act(self, view, messages):
        return oracle_choice(view)


class _Seeded(ScriptedAgent):
    """Randomness keyed on ``(seed, episode, conversation)``.

    Identical opening turns across cases would otherwise yield identical
    draws; the runner calls :meth:`fork` with the case seed so coin flips
    are independent between episodes yet reproducible.
    """

    seed: int = 0
    episode: int = 0

    def fork(self, episode: int):
        twin = copy.copy(self)
        twin.episode = episode
        return twin

    def _rng(self, messages) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.episode, _digest(messages)])


class RandomAgent(_Seeded):
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.label = f"random(seed={seed})"

    def act(self, view, messages):
        rng = self._rng(messages)
        valid = view.valid_actions()
        if len(valid) == 0:
            return view.current
        return int(valid[int(rng.integers(len(valid)))])


class NoisyAgent(_Seeded):
    """Follows the algorithm with probability ``p_follow``, otherwise deviates.

    A deviation is a valid non-following action when one exists, else a known
    non-following id (the current node, which is never in a following set).
    """

    def __init__(self, seed: int = 0, p_follow: float = 0.8):
        if not 0.0 <= p_follow <= 1.0:
            raise ValueError("p_follow must lie in [0, 1]")
        self.seed, self.p_follow = seed, p_follow
        self.label = f"noisy(seed={seed},p={p_follow:g})"

    def act(self, view, messages):
        rng = self._rng(messages)
        if rng.random() < self.p_follow:
            return oracle_choice(view)
        follow = set(view.following())
        if view.kind.family is Family.GUESS:
            mid = next(iter(follow), None)
            top = view.high - 1 if mid is not None else view.high
            g = int(rng.integers(view.low, top, endpoint=True))
            return g + 1 if mid is not None and g >= mid else g
        pool = [n for n in view.valid_actions() if n not in follow]
        if not pool:
            pool = sorted(n for n in ({view.current} | view.visited) if n not in follow)
        return int(pool[int(rng.integers(len(pool)))])


class InvalidAfterAgent(ScriptedAgent):
    """Plays the oracle for ``k`` steps, then answers with no number at all."""

    def __init__(self, k: int):
        self.k = k
        self.label = f"invalid-after({k})"

    def act(self, view, messages):
        return "xyzzy" if view.steps >= self.k else oracle_choice(view)


class SilentAgent:
    label = "silent"

    def respond(self, messages):
        return ""


class RemoteChatAgent:
    """OpenAI-compatible chat-completions client.

    The bearer token is read from the environment variable named by
    ``token_env`` at call time and is never stored or logged.
    """

    def __init__(self, endpoint: str, model: str, token_env: str = "OPENAI_API_KEY",
                 temperature: float = 0.0, max_tokens: int = 256, timeout: float = 60.0,
                 retries: int = 4, backoff: float = 1.0, min_interval: float = 0.0):
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        self.url, self.model, self.token_env = url, model, token_env
        self.temperature, self.max_tokens = temperature, max_tokens
        self.timeout, self.retries, self.backoff = timeout, retries, backoff
        self.min_interval = min_interval
        self.label = f"chat({model})"
        self._local = threading.local()
        self._rate_lock = threading.Lock()
        self._last_call = 0.0

    def spec(self) -> dict:
        return {"variant": "chat", "endpoint": self.url, "model": self.model,
                "token_env": self.token_env, "temperature": self.temperature,
                "max_tokens": self.max_tokens}

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _throttle(self):
        if self.min_interval <= 0:
            return
        with self._rate_lock:
            wait = self._last_call + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_call = time.monotonic()

    def respond(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model, "messages": messages,
                "temperature": self.temperature, "max_tokens": self.max_tokens}
        delay = self.backoff
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(delay)
                delay *= 2
            self._throttle()
            try:
                resp = self._session().post(self.url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning("chat request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("chat request got %s (attempt %d)", last_error, attempt + 1)
                continue
            if resp.status_code != 200:
                raise AgentTransportError(f"HTTP {resp.status_code} from {self.url}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise AgentTransportError("malformed chat-completion body") from None
            return content or ""
        raise AgentTransportError(f"giving up after {self.retries + 1} attempts: {last_error}")


def agent_from_spec(name: str, seed: int = 0, p_follow: float = 0.8, k: int = 0, **chat):
    """Build an agent from a CLI-style variant name."""
    name = name.lower()
    if name == "oracle":
        return OracleAgent()
    if name == "random":
        return RandomAgent(seed)
    if name == "noisy":
        return NoisyAgent(seed, p_follow)
    if name == "invalid-after":
        return InvalidAfterAgent(k)
    if name == "silent":
        return SilentAgent()
    if name == "chat":
        return RemoteChatAgent(**chat)
    raise ValueError(f"unknown agent variant {name!r}")


def agent_spec(agent) -> dict:
    """Serializable description (never contains a token value)."""
    if isinstance(agent, RemoteChatAgent):
        return agent.spec()
    d = {"variant": getattr(agent, "label", type(agent).__name__)}
    for attr in ("seed", "p_follow", "k"):
        if hasattr(agent, attr):
            d[attr] = getattr(agent, attr)
    return d
