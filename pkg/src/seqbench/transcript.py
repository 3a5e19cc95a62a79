"""Episode transcripts and their line-delimited JSON persistence.

A transcript file holds one ``header`` record, one ``step`` record per
interaction, and one ``footer`` record.  Each step carries a ``chain``
hash over the header and every step up to and including itself, so an
edited file fails :meth:`Transcript.verify_chain`.

Step fields:

``index``            1-based step number
``raw``              the agent's reply text
``action``           integer parsed from ``raw`` (null if unparseable)
``valid``            whether the environment accepted ``action``
``follow``           whether ``action`` followed the intended algorithm
``committed``        action applied to the environment (the oracle's under
                     teacher guiding; null when nothing was applied)
``observation``      feedback text returned after the step ("" if none)
``context_digest``   sha256 of the message list the agent saw
``elapsed``          wall-clock seconds spent in the agent call
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from seqbench.envs import TestCase
from seqbench.testgen import case_from_record, case_to_record

# Fields excluded from equality checks and from the hash chain.
TRANSPORT_FIELDS = ("context_digest", "elapsed", "chain")


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class StepRecord:
    index: int
    raw: str
    action: int | None
    valid: bool
    follow: bool
    committed: int | None
    observation: str
    context_digest: str = ""
    elapsed: float = 0.0
    chain: str = ""

    def core(self) -> dict:
        d = asdict(self)
        for key in TRANSPORT_FIELDS:
            d.pop(key)
        return d


@dataclass
class Transcript:
    case: TestCase
    protocol: str
    budget: int
    agent: str = ""
    ice: int = 0
    steps: list[StepRecord] = field(default_factory=list)
    reason: str | None = None
    aborted: bool = False
    error: str | None = None

    @property
    def teacher_guided(self) -> bool:
        return self.protocol == "teacher-guided"

    def header(self) -> dict:
        return {
            "type": "header",
            "case": case_to_record(self.case),
            "protocol": self.protocol,
            "ice": self.ice,
            "budget": self.budget,
            "agent": self.agent,
        }

    def footer(self) -> dict:
        return {
            "type": "footer",
            "reason": self.reason,
            "steps": len(self.steps),
            "aborted": self.aborted,
            "error": self.error,
        }

    def append(self, rec: StepRecord) -> None:
        prev = self.steps[-1].chain if self.steps else sha256_text(_canon(self.header()))
        rec.chain = sha256_text(prev + _canon(rec.core()))
        self.steps.append(rec)

    def verify_chain(self) -> bool:
        prev = sha256_text(_canon(self.header()))
        for rec in self.steps:
            expect = sha256_text(prev + _canon(rec.core()))
            if rec.chain != expect:
                return False
            prev = expect
        return True

    def core(self) -> dict:
        """Everything except transport metadata and agent/protocol labels."""
        return {
            "case": case_to_record(self.case),
            "budget": self.budget,
            "steps": [s.core() for s in self.steps],
            "reason": self.reason,
            "aborted": self.aborted,
        }

    def actions(self) -> list[int | None]:
        return [s.action for s in self.steps]

    def committed(self) -> list[int | None]:
        return [s.committed for s in self.steps]

    def to_jsonl(self) -> str:
        lines = [_canon(self.header())]
        lines += [_canon({"type": "step", **asdict(s)}) for s in self.steps]
        lines.append(_canon(self.footer()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not records or records[0].get("type") != "header":
            raise ValueError("transcript must start with a header record")
        if records[-1].get("type") != "footer":
            raise ValueError("transcript must end with a footer record")
        head, foot = records[0], records[-1]
        t = cls(
            case=case_from_record(head["case"]),
            protocol=head["protocol"],
            budget=head["budget"],
            agent=head.get("agent", ""),
            ice=head.get("ice", 0),
            reason=foot["reason"],
            aborted=foot["aborted"],
            error=foot.get("error"),
        )
        for rec in records[1:-1]:
            if rec.pop("type") != "step":
                raise ValueError("unexpected record between header and footer")
            t.steps.append(StepRecord(**rec))
        if foot["steps"] != len(t.steps):
            raise ValueError(f"footer promises {foot['steps']} steps, found {len(t.steps)}")
        return t

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Transcript":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))
