# The optimal policies, and how far a noisy player drifts from them.

import numpy as np

from seqbench import oracle
from seqbench.agents import NoisyAgent, OracleAgent
from seqbench.envs import BASE_KINDS, Mode
from seqbench.runner import run_testset
from seqbench.scoring import summarize
from seqbench.testgen import gen_case, generate_testset

# %% Trajectory lengths of the oracle over many random cases.
for mode in Mode:
    for kind in BASE_KINDS:
        lengths = np.array([oracle.k_max(gen_case(s, mode, kind)) for s in range(300)])
        print(f"{mode.value:4} {kind.value:8} mean {lengths.mean():5.2f}  max {lengths.max()}")

# %% Full test sets: the oracle solves everything and always follows.
for kind in BASE_KINDS:
    ts = generate_testset(kind, Mode.EASY, 0)
    s = summarize(run_testset(OracleAgent(), ts, parallelism=4))
    print(kind.value, {k: round(v, 3) for k, v in s.values.items() if v is not None})

# %% A player that follows with probability 0.8.
for kind in BASE_KINDS:
    ts = generate_testset(kind, Mode.EASY, 0, count=100)
    s = summarize(run_testset(NoisyAgent(seed=1, p_follow=0.8), ts))
    print(kind.value, {k: round(v, 3) for k, v in s.values.items() if v is not None})
