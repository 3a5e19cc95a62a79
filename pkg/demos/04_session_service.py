# Driving episodes over HTTP.
#
# The service owns the environment state; the client only sends actions.
# Transcripts pulled back from the server match in-process runs.

from seqbench.agents import NoisyAgent
from seqbench.envs import EnvKind, Mode
from seqbench.runner import run_episode
from seqbench.service import SessionClient, SessionServer, run_remote_episode
from seqbench.testgen import gen_case

server = SessionServer(port=0)
server.start_background()
client = SessionClient(server.url)
print("listening on", server.url)

# %% Raw protocol: create, step, fetch the transcript.
info = client.create(kind="CaveBFS", mode="EASY", seed=3)
print(info["opening"])
r = client.step(info["session"], info["observation"]["adjacent"][0], "heading into the first cave")
print(r["text"], "| valid:", r["valid"])
r = client.step(info["session"], "INVALID", "I am lost")
print("terminated:", r["terminated"], r["reason"])
print(client.transcript(info["session"]).to_jsonl())

# %% The same agent, locally and remotely.
case = gen_case(5, Mode.HARD, EnvKind.DFS)
local = run_episode(NoisyAgent(2), case)
remote = run_remote_episode(NoisyAgent(2), client, case)
print("identical:", local.core() == remote.core(), "| steps:", len(local.steps))

server.shutdown()
server.server_close()
