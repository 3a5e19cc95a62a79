# Teacher guiding: the agent proposes, the oracle moves.
#
# Every proposal is scored against the oracle's state, so the per-step
# accuracy curve shows where in a trajectory an agent tends to slip.

from seqbench.agents import NoisyAgent, RandomAgent
from seqbench.envs import EnvKind, Mode
from seqbench.runner import RunConfig, run_testset
from seqbench.scoring import summarize
from seqbench.testgen import generate_testset

config = RunConfig(teacher_guided=True)
ts = generate_testset(EnvKind.DFS, Mode.EASY, 11)

# %%
for agent in (NoisyAgent(seed=0, p_follow=0.8), NoisyAgent(seed=0, p_follow=0.5), RandomAgent(seed=0)):
    s = summarize(run_testset(agent, ts, config))
    curve = " ".join(f"{p:.2f}" for p in s.values["PSACC"])
    print(f"{agent.label:22} PSACC_avg {s.values['PSACC_avg']:.3f}")
    print("   per step:", curve)

# %% Random play is close to the oracle early on, when most moves are fresh
# neighbours, and falls behind once backtracking becomes mandatory.
