"""Metrics from persisted transcripts, run manifests and report tables.

Follow flags are always recomputed from the case and the action prefix, so a
transcript's stored flags are never trusted by the scorer.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

from seqbench import __version__, metrics, oracle
from seqbench.envs import EnvKind, Family, invalidate, replay, reset, step
from seqbench.metrics import EpisodeMetrics, StepFollowMatrix
from seqbench.transcript import Transcript

# Metric columns of the score and report tables.
COLUMNS = ("Err_min", "Err_sum", "G_min", "G_sum", "ACC", "PSACC_avg")


def recompute_follow(t: Transcript) -> list[bool]:
    if not t.teacher_guided:
        return oracle.following_flags(t.case, t.actions(), t.budget)
    state, _ = reset(t.case, t.budget)
    flags = []
    for rec in t.steps:
        flags.append(oracle.is_following(state, rec.action))
        if rec.committed is None:
            invalidate(state)
        else:
            step(state, rec.committed)
    return flags


def episode_metrics(t: Transcript, literal_max: bool = False) -> EpisodeMetrics:
    flags = recompute_follow(t)
    m = EpisodeMetrics(t.case.kind.value, len(t.steps), flags, metrics.acc(flags))
    if t.teacher_guided:
        return m  # the environment path is the oracle's, not the agent's
    state, _ = replay(t.case, t.actions(), t.budget)
    case = t.case
    if case.kind.family is Family.GUESS:
        m.err_min = metrics.err_min(state.guesses, case.target, case.low, case.high, literal_max)
        m.err_sum = metrics.err_sum(state.guesses, case.target, case.low, case.high)
    else:
        m.g_min = metrics.coverage_min(state.timeline, case.num_nodes)
        m.g_sum = metrics.coverage_sum(state.timeline, case.num_nodes)
    return m


@dataclass
class RunSummary:
    kind: str
    protocol: str
    episodes: int
    aborted: int
    values: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "protocol": self.protocol, "episodes": self.episodes,
                "aborted": self.aborted, "metrics": self.values}


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return math.fsum(xs) / len(xs) if xs else None


def summarize(transcripts: list[Transcript]) -> RunSummary:
    """Average per-episode metrics over non-aborted episodes (in case order)."""
    done = [t for t in transcripts if not t.aborted]
    kind = transcripts[0].case.kind.value if transcripts else ""
    protocol = transcripts[0].protocol if transcripts else ""
    per = [episode_metrics(t) for t in done]
    values = {
        "Err_min": _mean(m.err_min for m in per),
        "Err_sum": _mean(m.err_sum for m in per),
        "G_min": _mean(m.g_min for m in per),
        "G_sum": _mean(m.g_sum for m in per),
        "ACC": _mean(m.acc for m in per),
        "PSACC_avg": None,
    }
    if done and done[0].teacher_guided:
        matrix = StepFollowMatrix()
        for t, m in zip(done, per):
            matrix.add(m.follow_flags, oracle.k_max(t.case))
        values["PSACC_avg"] = metrics.psacc_avg(matrix)
        values["PSACC"] = metrics.psacc(matrix)
    return RunSummary(kind, protocol, len(done), len(transcripts) - len(done), values)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def score_csv(transcripts: list[Transcript]) -> str:
    """Per-episode metric table; byte-stable for the same transcripts."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "kind", "protocol", "steps", "reason", "aborted", *COLUMNS[:-1]])
    for i, t in enumerate(transcripts):
        if t.aborted:
            w.writerow([i, t.case.kind.value, t.protocol, len(t.steps), "", "1", "", "", "", "", ""])
            continue
        m = episode_metrics(t)
        w.writerow([i, t.case.kind.value, t.protocol, m.k_total, t.reason or "", "0",
                    _fmt(m.err_min), _fmt(m.err_sum), _fmt(m.g_min), _fmt(m.g_sum), _fmt(m.acc)])
    s = summarize(transcripts)
    w.writerow(["mean", s.kind, s.protocol, "", "", str(s.aborted),
                *(_fmt(s.values[c]) for c in COLUMNS[:-1])])
    if s.values["PSACC_avg"] is not None:
        w.writerow(["PSACC_avg", s.kind, s.protocol, "", "", "", "", "", "", "",
                    _fmt(s.values["PSACC_avg"])])
    return buf.getvalue()


# -- run directories -------------------------------------------------------

def transcript_name(index: int) -> str:
    return f"transcripts/{index:05d}.jsonl"


def write_run(out_dir, transcripts: list[Transcript], testset_ref: dict, agent: dict,
              config: dict) -> dict:
    out = Path(out_dir)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    refs = []
    for i, t in enumerate(transcripts):
        name = transcript_name(i)
        t.save(out / name)
        refs.append(name)
    summary = summarize(transcripts)
    manifest = {
        "harness_version": __version__,
        "testset": testset_ref,
        "agent": agent,
        "config": config,
        "transcripts": refs,
        "aborted": [i for i, t in enumerate(transcripts) if t.aborted],
        "summary": summary.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def load_run(path) -> tuple[dict, list[Transcript]]:
    """Accept a run directory or its manifest.json."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    return manifest, [Transcript.load(base / ref) for ref in manifest["transcripts"]]


# -- reports ---------------------------------------------------------------

_GOAL = {Family.GUESS: ("Err_min", "Err_sum"), Family.DFS: ("G_min", "G_sum"), Family.BFS: ("G_min", "G_sum")}


def _row_label(manifest: dict) -> str:
    agent = manifest["agent"]
    name = agent.get("model") or agent.get("variant", "?")
    return f"{name} [{manifest['config']['protocol']}, ICE={manifest['config']['ice']}]"


def report_rows(manifests: list[dict]) -> tuple[list[str], list[list[str]]]:
    """One row per (agent, protocol); one column group per environment kind."""
    kinds = [k for k in EnvKind if any(m["summary"]["kind"] == k.value for m in manifests)]
    header = ["Model"]
    for k in kinds:
        goal, policy = _GOAL[k.family]
        header += [f"{k.value} {goal}", f"{k.value} {policy}", f"{k.value} ACC", f"{k.value} PSACC_avg"]
    rows: dict[str, dict] = {}
    for m in manifests:
        rows.setdefault(_row_label(m), {})[m["summary"]["kind"]] = m["summary"]["metrics"]
    body = []
    for label in sorted(rows):
        row = [label]
        for k in kinds:
            vals = rows[label].get(k.value, {})
            goal, policy = _GOAL[k.family]
            for col in (goal, policy, "ACC", "PSACC_avg"):
                v = vals.get(col)
                row.append("-" if v is None else f"{v:.2f}")
        body.append(row)
    return header, body


def report_text(manifests: list[dict]) -> str:
    header, body = report_rows(manifests)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_csv(manifests: list[dict]) -> str:
    header, body = report_rows(manifests)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()
