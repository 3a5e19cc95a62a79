"""Optimal policies and the algorithm-following checks.

The "following set" of a state is every action the intended algorithm
would accept next:

* guessing: the floor midpoint of the feedback-implied interval;
* DFS: any unvisited neighbour of the current node, otherwise the node
  through which the current node was first entered;
* BFS: any unvisited frontier node of minimal depth from node 0.

The optimal policy always picks the smallest id in the following set.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache

from seqbench.envs import Comparison, EnvState, Family, TestCase, invalidate, reset, step


class InconsistentFeedbackError(ValueError):
    pass


def optimal_guess(lo: int, hi: int) -> int:
    if lo > hi:
        raise InconsistentFeedbackError(f"empty interval [{lo}, {hi}]")
    return (lo + hi) // 2


def update_bounds(lo: int, hi: int, guess: int, comparison: Comparison) -> tuple[int, int]:
    if not lo <= guess <= hi:
        raise InconsistentFeedbackError(f"guess {guess} outside [{lo}, {hi}]")
    if comparison is Comparison.TARGET_BIGGER:
        lo = guess + 1
    elif comparison is Comparison.TARGET_LOWER:
        hi = guess - 1
    else:
        lo = hi = guess
    if lo > hi:
        raise InconsistentFeedbackError(f"feedback leaves an empty interval [{lo}, {hi}]")
    return lo, hi


def dfs_following_actions(state: EnvState) -> set[int]:
    if len(state.visited) == state.case.num_nodes:
        return set()
    fresh = {n for n in state.adjacency[state.current] if n not in state.visited}
    if fresh:
        return fresh
    back = state.parent.get(state.current)
    return set() if back is None else {back}


@lru_cache(maxsize=4096)
def _depths(edges: tuple[tuple[int, int], ...], n: int) -> tuple[int, ...]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    depth = [-1] * n
    depth[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                queue.append(v)
    return tuple(depth)


def node_depths(case: TestCase) -> tuple[int, ...]:
    return _depths(case.edges, case.num_nodes)


def bfs_frontier(state: EnvState) -> set[int]:
    return {
        n
        for v in state.visited
        for n in state.adjacency[v]
        if n not in state.visited
    }


def bfs_following_actions(state: EnvState) -> set[int]:
    frontier = bfs_frontier(state)
    if not frontier:
        return set()
    depth = node_depths(state.case)
    best = min(depth[n] for n in frontier)
    return {n for n in frontier if depth[n] == best}


def following_actions(state: EnvState) -> set[int]:
    """Following set for graph environments; the singleton midpoint for guessing."""
    family = state.case.kind.family
    if family is Family.GUESS:
        return {optimal_guess(state.lo, state.hi)}
    if family is Family.DFS:
        return dfs_following_actions(state)
    return bfs_following_actions(state)


def is_following(state: EnvState, action: int | None) -> bool:
    if action is None:
        return False
    if state.case.kind.family is Family.GUESS:
        return state.lo <= state.hi and action == optimal_guess(state.lo, state.hi)
    return action in following_actions(state)


def optimal_action(state: EnvState) -> int:
    if state.case.kind.family is Family.GUESS:
        return optimal_guess(state.lo, state.hi)
    options = following_actions(state)
    if not options:
        raise ValueError("no following action: traversal complete or history off-policy at the root")
    return min(options)


def optimal_trajectory(case: TestCase) -> list[int]:
    """Actions of the optimal policy from reset until solved (budget ignored)."""
    state, _ = reset(case, budget=10**9)
    actions = []
    while not state.terminated:
        action = optimal_action(state)
        actions.append(action)
        step(state, action)
    return actions


def k_max(case: TestCase) -> int:
    return len(optimal_trajectory(case))


def following_flags(case: TestCase, actions, budget: int | None = None) -> list[bool]:
    """Recompute follow flags for a free-play action prefix (``None`` = unparseable)."""
    state, _ = reset(case, budget)
    flags = []
    for action in actions:
        if state.terminated:
            break
        flags.append(is_following(state, action))
        if action is None:
            invalidate(state)
        else:
            step(state, action)
    return flags
