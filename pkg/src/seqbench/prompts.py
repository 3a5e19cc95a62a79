"""System prompts and environment feedback text.

System prompts are reproduced verbatim for all six environments.  Feedback
strings are a frozen convention of this package; :func:`parse_feedback`
inverts :func:`render_feedback` so that scripted agents can work purely from
the text a model would see.
"""

from __future__ import annotations

import re

from seqbench.envs import Comparison, EnvKind, Family, Observation

SYSTEM_PROMPTS: dict[EnvKind, str] = {
    EnvKind.GUESS_NUM: (
        "You are required to guess the random number which I have just picked between {min} and {max}. \n"
        "I will only tell you whether the true number is bigger or lower than your guess. \n"
        "Adjust your guess according to my response. \n"
        "Try as few times as you can. You can only reply with an integer number between {min} and {max}."
    ),
    EnvKind.DFS: (
        "You are required to visit all the nodes in an undirected non-cyclic graph. \n"
        "An undirected non-cyclic graph contains a set of nodes and a set of edges that each connect a pair of nodes. \n"
        "All edges are undirected so that you can move from one node to the other connected by the edge in either direction. \n"
        "Every time you visit a node, you will be given the adjacent nodes connected to this node. \n"
        "You can only reply with an integer number indicating which node to be visited next. Do not explain your answer. \n"
        "Try to traverse the entire graph in as few rounds as possible. \n"
        "You are currently on the node 0.\n"
        "You should use depth-first-search algorithm, each time you should select a node you have not moved to. \n"
        "If all nodes adjacent to the current node have been visited, you should backtrack to the node through "
        "which you entered this node for the first time."
    ),
    EnvKind.BFS: (
        "You are required to visit all the nodes in an undirected non-cyclic graph. \n"
        "An undirected non-cyclic graph contains a set of nodes, and a set of edges that each connects a pair of nodes. \n"
        "Every time you visit a node, you will be given the adjacent nodes connected to this node. \n"
        "You can only visit nodes that are adjacent to the already visited nodes. \n"
        "You can only reply with an integer number indicating which node to be visited next. Do not explain your answer. \n"
        "Try to traverse the entire graph in as few rounds as possible. You are currently on the node 0.\n"
        "You should use breadth-first-search algorithm. The algorithm works as follows:\n"
        "1. Initialize a queue data structure and add the starting node to the queue.\n"
        "2. While the queue is not empty, visit the first node and remove it from the queue.\n"
        "3. For nodes adjacent to the removed vertex, add the unvisited ones to the queue.\n"
        "4. Repeat steps 2-3 until the queue is empty."
    ),
    EnvKind.COIN: (
        "You are in a hidden temple where an old witch sits with a chest of gold. \n"
        "The witch promises to reward you with gold coins, the amount hidden within the chest ranging from {min} and {max}. \n"
        "To claim your prize, you must correctly guess the exact number of gold coins in the chest. \n"
        "After each guess, the witch will hint if the actual amount is higher or lower than your guess. \n"
        "Use these clues to adjust your guess accordingly. Try as few times as you can. "
        "You can only reply with an integer number between {min} and {max}."
    ),
    EnvKind.CAVE_DFS: (
        "There is an expansive underground cave system in which each cave is uniquely numbered and interconnected by tunnels.\n"
        "Every time you visit a cave, you will know the adjacent caves directly connected to this one. \n"
        "You can only reply with an integer number indicating which cave to be visited next. Do not explain your answer. \n"
        "Your objective is to explore every cave, starting from cave 0. \n"
        "Try to visit all the caves in as few rounds as possible. You are currently in the cave 0."
    ),
    EnvKind.CAVE_BFS: (
        "There is an expansive underground cave system in which each cave is uniquely numbered and interconnected by tunnels. \n"
        "Every time you and your team visit a cave, you will know the adjacent caves directly connected tno this one. \n"
        "Your team will then split into smaller groups to explore different caves, but groups can only move to caves "
        "adjacent to the visited cave.\n"
        "You can only reply with an integer number indicating which cave to be visited next. Do not explain your answer. \n"
        "Your objective is to explore every cave, starting from cave 0. \n"
        "Try to visit all the caves in as few rounds as possible. You and your team are currently in the cave 0."
    ),
}

# Appended to the feedback of a step that solves the episode.
TERMINAL_MARKER = "<episode finished>"

_GUESS_TEXT = {
    Comparison.TARGET_BIGGER: "The true number is bigger than your guess.",
    Comparison.TARGET_LOWER: "The true number is lower than your guess.",
    Comparison.CORRECT: "Correct!",
}
_COIN_TEXT = {
    Comparison.TARGET_BIGGER: "The witch hints that the actual amount is higher than your guess.",
    Comparison.TARGET_LOWER: "The witch hints that the actual amount is lower than your guess.",
    Comparison.CORRECT: "Correct! The witch hands over the chest of gold.",
}


def _place_word(kind: EnvKind) -> str:
    return "cave" if kind.embodied else "node"


def render_system_prompt(case) -> str:
    """Return the system prompt for ``case`` with guessing bounds filled in."""
    template = SYSTEM_PROMPTS[case.kind]
    if case.kind.family is Family.GUESS:
        return template.replace("{min}", str(case.low)).replace("{max}", str(case.high))
    return template


def render_feedback(obs: Observation, kind: EnvKind) -> str:
    if kind.family is Family.GUESS:
        if obs.comparison is None:
            return ""
        text = (_COIN_TEXT if kind.embodied else _GUESS_TEXT)[obs.comparison]
    else:
        word = _place_word(kind)
        adjacent = ", ".join(str(n) for n in obs.adjacent)
        text = f"You are now in {word} {obs.node}. Adjacent {word}s: {adjacent}."
    if obs.solved:
        text += "\n" + TERMINAL_MARKER
    return text


def parse_feedback(text: str, kind: EnvKind) -> Observation:
    """Invert :func:`render_feedback`.  Raises ``ValueError`` on foreign text."""
    solved = text.endswith("\n" + TERMINAL_MARKER)
    body = text[: -len(TERMINAL_MARKER) - 1] if solved else text
    if kind.family is Family.GUESS:
        if body == "":
            return Observation()
        table = _COIN_TEXT if kind.embodied else _GUESS_TEXT
        for comparison, phrase in table.items():
            if body == phrase:
                return Observation(comparison=comparison, solved=solved)
        raise ValueError(f"unrecognised feedback for {kind.value}: {text!r}")
    word = _place_word(kind)
    m = re.fullmatch(rf"You are now in {word} (\d+)\. Adjacent {word}s: ([\d, ]*)\.", body)
    if m is None:
        raise ValueError(f"unrecognised feedback for {kind.value}: {text!r}")
    adjacent = tuple(int(tok) for tok in m.group(2).split(",") if tok.strip())
    return Observation(node=int(m.group(1)), adjacent=adjacent, solved=solved)


def identify_kind(system_prompt: str) -> EnvKind:
    """Recover the environment kind from a rendered system prompt."""
    for kind, template in SYSTEM_PROMPTS.items():
        head = template.split("{min}")[0]
        if system_prompt.startswith(head) and (
            kind.family is Family.GUESS or system_prompt == template
        ):
            return kind
    raise ValueError("system prompt does not belong to any known environment")


def parse_bounds(system_prompt: str) -> tuple[int, int]:
    m = re.search(r"(-?\d+) and (-?\d+)", system_prompt)
    if m is None:
        raise ValueError("no guessing bounds in system prompt")
    return int(m.group(1)), int(m.group(2))
