# Walking through the six environments by hand.
#
# Each case is a frozen record; reset() gives back a mutable state plus the
# opening observation, and step() advances it one action at a time.

from seqbench.envs import EnvKind, Mode, reset, step
from seqbench.prompts import render_feedback, render_system_prompt
from seqbench.testgen import gen_case

# %% A guessing case.  The target is drawn uniformly from the mode's range.
case = gen_case(7, Mode.EASY, EnvKind.GUESS_NUM)
print(render_system_prompt(case)[:120], "...")
state, obs = reset(case)
for _ in range(4):
    guess = (state.lo + state.hi) // 2  # bisect what the feedback still allows
    out = step(state, guess)
    print(guess, "->", render_feedback(out.observation, case.kind))
print("interval the target must lie in:", (state.lo, state.hi))

# %% The same target, wearing the Coin skin.  Only the wording changes.
coin = case.with_kind(EnvKind.COIN)
state, _ = reset(coin)
print(render_feedback(step(state, 16416).observation, coin.kind))

# %% A DFS tree.  Node 0 is always the entry point.
tree = gen_case(7, Mode.EASY, EnvKind.DFS)
print("edges:", tree.edges)
state, obs = reset(tree)
print(render_feedback(obs, tree.kind))
nxt = obs.adjacent[0]
out = step(state, nxt)
print(render_feedback(out.observation, tree.kind))
# backtracking to the parent is allowed in DFS
out = step(state, 0)
print("back at", out.observation.node, "visited", sorted(state.visited))

# %% BFS: any frontier node is a legal move, revisits are not.
bfs = gen_case(7, Mode.EASY, EnvKind.BFS)
state, obs = reset(bfs)
out = step(state, obs.adjacent[0])
out = step(state, obs.adjacent[0])
print("revisit valid?", out.valid, "| episode ended with", state.reason.value)
print("visited-count timeline:", state.timeline)
