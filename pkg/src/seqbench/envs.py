"""Episode state machines for the guessing and graph-traversal environments.

Six environment kinds share three transition families.  The embodied kinds
(Coin, CaveDFS, CaveBFS) only change the text shown to the model; a case run
under ``COIN`` behaves exactly like the same case run under ``GUESS_NUM``.

Typical use::

    state, obs = reset(case)
    while not state.terminated:
        outcome = step(state, action)
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field


class Family(str, enum.Enum):
    GUESS = "guess"
    DFS = "dfs"
    BFS = "bfs"


class EnvKind(str, enum.Enum):
    GUESS_NUM = "GuessNum"
    DFS = "DFS"
    BFS = "BFS"
    COIN = "Coin"
    CAVE_DFS = "CaveDFS"
    CAVE_BFS = "CaveBFS"

    @property
    def family(self) -> Family:
        return _FAMILY[self]

    @property
    def embodied(self) -> bool:
        return self in (EnvKind.COIN, EnvKind.CAVE_DFS, EnvKind.CAVE_BFS)

    @property
    def is_graph(self) -> bool:
        return self.family is not Family.GUESS


_FAMILY = {
    EnvKind.GUESS_NUM: Family.GUESS,
    EnvKind.COIN: Family.GUESS,
    EnvKind.DFS: Family.DFS,
    EnvKind.CAVE_DFS: Family.DFS,
    EnvKind.BFS: Family.BFS,
    EnvKind.CAVE_BFS: Family.BFS,
}

BASE_KINDS = (EnvKind.GUESS_NUM, EnvKind.DFS, EnvKind.BFS)


class Mode(str, enum.Enum):
    EASY = "EASY"
    HARD = "HARD"


@dataclass(frozen=True)
class ModeParams:
    low: int
    high: int
    dfs_nodes: int
    bfs_nodes: int
    budget: int
    testset_size: int


MODE_PARAMS = {
    Mode.EASY: ModeParams(low=32, high=32800, dfs_nodes=8, bfs_nodes=15, budget=20, testset_size=400),
    Mode.HARD: ModeParams(low=32, high=33_000_000, dfs_nodes=13, bfs_nodes=25, budget=30, testset_size=1500),
}


def num_nodes(kind: EnvKind, mode: Mode) -> int:
    params = MODE_PARAMS[mode]
    return params.dfs_nodes if kind.family is Family.DFS else params.bfs_nodes


class InvalidCaseError(ValueError):
    pass


class EpisodeOverError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class TestCase:
    """Frozen definition of one episode.

    Guessing cases carry ``low``/``high``/``target``; graph cases carry a
    canonical edge list over nodes ``0..num_nodes-1``.
    """

    __test__ = False  # not a pytest class

    kind: EnvKind
    mode: Mode
    seed: int
    low: int | None = None
    high: int | None = None
    target: int | None = None
    num_nodes: int | None = None
    edges: tuple[tuple[int, int], ...] = ()
    start: int = 0

    def with_kind(self, kind: EnvKind) -> "TestCase":
        """Same case under another skin of the same family."""
        if kind.family is not self.kind.family:
            raise ValueError(f"{kind.value} is not a skin of {self.kind.value}")
        return TestCase(kind, self.mode, self.seed, self.low, self.high, self.target,
                        self.num_nodes, self.edges, self.start)

    def content_key(self) -> tuple:
        """Canonical content, ignoring the seed and the skin."""
        return (self.kind.family.value, self.mode.value, self.low, self.high, self.target,
                self.num_nodes, self.edges)

    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes or 0)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return tuple(tuple(sorted(n)) for n in adj)

    def validate(self) -> None:
        if self.kind.family is Family.GUESS:
            if self.low is None or self.high is None or self.target is None:
                raise InvalidCaseError("guessing case needs low, high and target")
            if self.low > self.high:
                raise InvalidCaseError(f"empty range [{self.low}, {self.high}]")
            if not self.low <= self.target <= self.high:
                raise InvalidCaseError(f"target {self.target} outside [{self.low}, {self.high}]")
            return
        m = self.num_nodes
        if m is None or m < 1:
            raise InvalidCaseError("graph case needs a positive node count")
        if self.start != 0:
            raise InvalidCaseError("episodes always start at node 0")
        if len(self.edges) != m - 1:
            raise InvalidCaseError(f"tree on {m} nodes needs {m - 1} edges, got {len(self.edges)}")
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < m and 0 <= b < m):
                raise InvalidCaseError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise InvalidCaseError(f"self-loop on node {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InvalidCaseError(f"duplicate edge {key}")
            seen.add(key)
        adj = self.adjacency()
        reached = {0}
        queue = deque([0])
        while queue:
            for n in adj[queue.popleft()]:
                if n not in reached:
                    reached.add(n)
                    queue.append(n)
        if len(reached) != m:
            raise InvalidCaseError(f"graph is disconnected ({len(reached)} of {m} nodes reachable)")


class Comparison(str, enum.Enum):
    TARGET_BIGGER = "TargetBigger"
    TARGET_LOWER = "TargetLower"
    CORRECT = "Correct"


@dataclass(frozen=True)
class Observation:
    """What the environment reveals after a step.

    Guessing: ``comparison`` (None before the first guess).  Graph: the node
    just reached and its sorted neighbours.
    """

    comparison: Comparison | None = None
    node: int | None = None
    adjacent: tuple[int, ...] = ()
    solved: bool = False


class Reason(str, enum.Enum):
    SOLVED = "solved"
    BUDGET_EXHAUSTED = "budget_exhausted"
    INVALID_RESPONSE = "invalid_response"


@dataclass
class EnvState:
    case: TestCase
    budget: int
    adjacency: tuple[tuple[int, ...], ...] = ()
    step_index: int = 0
    terminated: bool = False
    reason: Reason | None = None
    # guessing
    lo: int = 0
    hi: int = 0
    guesses: list[int] = field(default_factory=list)
    # graph
    visited: set[int] = field(default_factory=set)
    current: int = 0
    parent: dict[int, int | None] = field(default_factory=dict)
    timeline: list[int] = field(default_factory=list)

    @property
    def kind(self) -> EnvKind:
        return self.case.kind

    def copy(self) -> "EnvState":
        return EnvState(self.case, self.budget, self.adjacency, self.step_index, self.terminated,
                        self.reason, self.lo, self.hi, list(self.guesses), set(self.visited),
                        self.current, dict(self.parent), list(self.timeline))


@dataclass(frozen=True)
class StepOutcome:
    valid: bool
    observation: Observation | None
    terminated: bool
    reason: Reason | None


def reset(case: TestCase, budget: int | None = None) -> tuple[EnvState, Observation]:
    case.validate()
    state = EnvState(case, budget if budget is not None else MODE_PARAMS[case.mode].budget)
    if case.kind.family is Family.GUESS:
        state.lo, state.hi = case.low, case.high
        return state, Observation()
    state.adjacency = case.adjacency()
    state.visited = {0}
    state.current = 0
    state.parent = {0: None}
    return state, Observation(node=0, adjacent=state.adjacency[0])


def is_valid(state: EnvState, action: int) -> bool:
    """Would ``action`` be accepted from ``state``?  Does not mutate."""
    case = state.case
    family = case.kind.family
    if family is Family.GUESS:
        return case.low <= action <= case.high
    if not 0 <= action < case.num_nodes:
        return False
    if family is Family.DFS:
        return action in state.adjacency[state.current]
    # BFS: an unvisited node touching the visited set
    return action not in state.visited and any(n in state.visited for n in state.adjacency[action])


def _finish(state: EnvState, reason: Reason) -> None:
    state.terminated = True
    state.reason = reason


def _check_open(state: EnvState) -> None:
    if state.terminated:
        raise EpisodeOverError(f"episode already terminated ({state.reason.value})")


def invalidate(state: EnvState) -> StepOutcome:
    """Consume a step for a reply that carried no usable action."""
    _check_open(state)
    state.step_index += 1
    if state.case.kind.is_graph:
        state.timeline.append(len(state.visited))
    _finish(state, Reason.INVALID_RESPONSE)
    return StepOutcome(False, None, True, state.reason)


def step(state: EnvState, action: int) -> StepOutcome:
    _check_open(state)
    if not is_valid(state, action):
        return invalidate(state)
    state.step_index += 1
    if state.case.kind.family is Family.GUESS:
        obs = _step_guess(state, action)
    else:
        obs = _step_graph(state, action)
    if obs.solved:
        _finish(state, Reason.SOLVED)
    elif state.step_index >= state.budget:
        _finish(state, Reason.BUDGET_EXHAUSTED)
    return StepOutcome(True, obs, state.terminated, state.reason)


def _step_guess(state: EnvState, guess: int) -> Observation:
    target = state.case.target
    state.guesses.append(guess)
    if guess == target:
        state.lo = state.hi = guess
        return Observation(comparison=Comparison.CORRECT, solved=True)
    if target > guess:
        state.lo = max(state.lo, guess + 1)
        return Observation(comparison=Comparison.TARGET_BIGGER)
    state.hi = min(state.hi, guess - 1)
    return Observation(comparison=Comparison.TARGET_LOWER)


def _step_graph(state: EnvState, node: int) -> Observation:
    if node not in state.visited:
        state.visited.add(node)
        state.parent[node] = state.current
    state.current = node
    state.timeline.append(len(state.visited))
    solved = len(state.visited) == state.case.num_nodes
    return Observation(node=node, adjacent=state.adjacency[node], solved=solved)


def replay(case: TestCase, actions, budget: int | None = None) -> tuple[EnvState, list[StepOutcome]]:
    """Run a fixed action sequence; ``None`` entries are unparseable replies."""
    state, _ = reset(case, budget)
    outcomes = []
    for action in actions:
        if state.terminated:
            break
        outcomes.append(invalidate(state) if action is None else step(state, action))
    return state, outcomes
