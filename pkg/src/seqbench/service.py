"""HTTP session service exposing the environments to external clients.

Wire format
-----------
Request bodies are line-oriented text; responses are JSON (or JSON lines).

``POST /sessions``
    Body: ``key=value`` lines.  Either ``kind``, ``mode`` and ``seed`` (the
    case is generated) or ``case=<one test-set record>``; optional
    ``budget``.  201 -> ``{"session", "system_prompt", "opening",
    "observation", "step_index"}``.

``POST /sessions/<id>/step``
    Body: first line is the action, either an integer or the literal
    ``INVALID`` (the agent gave no usable answer; this consumes a step and
    ends the episode).  Any following lines are the agent's raw reply and are
    stored verbatim.  200 -> ``{"valid", "terminated", "reason",
    "observation", "text", "step_index"}``.  A first line that is neither
    yields 422 and does not consume a step.

``GET /sessions/<id>/transcript``
    ``application/x-ndjson``: the transcript file format of
    :mod:`seqbench.transcript`.  Follow flags are computed at read time.

Errors: 404 unknown session, 409 step on a finished episode, 422 malformed
request.  Sessions are independent; steps on one session are serialized.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

from seqbench import oracle
from seqbench.envs import EnvKind, EnvState, Mode, TestCase, invalidate, reset, step
from seqbench.prompts import render_feedback, render_system_prompt
from seqbench.runner import RunConfig, Submission, run_free_play
from seqbench.testgen import case_from_record, case_to_record, gen_case
from seqbench.transcript import StepRecord, Transcript

logger = logging.getLogger(__name__)

INVALID_TOKEN = "INVALID"
_ACTION_LINE = re.compile(r"[-+]?\d+")


class RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _obs_payload(obs) -> dict | None:
    if obs is None:
        return None
    return {
        "comparison": obs.comparison.value if obs.comparison else None,
        "node": obs.node,
        "adjacent": list(obs.adjacent),
        "solved": obs.solved,
    }


@dataclass
class Session:
    case: TestCase
    state: EnvState
    lock: threading.Lock = field(default_factory=threading.Lock)
    steps: list[tuple[str, int | None, bool, str]] = field(default_factory=list)

    def transcript(self) -> Transcript:
        with self.lock:
            steps = list(self.steps)
            reason = self.state.reason.value if self.state.reason else None
        flags = oracle.following_flags(self.case, [a for _, a, _, _ in steps], self.state.budget)
        t = Transcript(self.case, "service", self.state.budget)
        for i, ((raw, action, valid, text), follow) in enumerate(zip(steps, flags), 1):
            t.append(StepRecord(i, raw, action, valid, follow, action if valid else None, text))
        t.reason = reason
        return t


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def create(self, case: TestCase, budget: int | None = None) -> tuple[str, Session, dict]:
        state, obs = reset(case, budget)
        session = Session(case, state)
        with self._lock:
            sid = f"s{next(self._ids):06d}"
            self._sessions[sid] = session
        info = {
            "session": sid,
            "system_prompt": render_system_prompt(case),
            "opening": render_feedback(obs, case.kind),
            "observation": _obs_payload(obs),
            "step_index": 0,
        }
        return sid, session, info

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self._sessions.get(sid)
        if session is None:
            raise RequestError(404, f"unknown session {sid}")
        return session

    def step(self, sid: str, body: str) -> dict:
        session = self.get(sid)
        first, _, raw = body.partition("\n")
        first = first.strip()
        if first == INVALID_TOKEN:
            action = None
        elif _ACTION_LINE.fullmatch(first):
            action = int(first)
        else:
            raise RequestError(422, f"action line must be an integer or {INVALID_TOKEN}")
        with session.lock:
            state = session.state
            if state.terminated:
                raise RequestError(409, f"episode already terminated ({state.reason.value})")
            outcome = invalidate(state) if action is None else step(state, action)
            text = render_feedback(outcome.observation, session.case.kind) if outcome.observation else ""
            session.steps.append((raw, action, outcome.valid, text))
            return {
                "valid": outcome.valid,
                "terminated": outcome.terminated,
                "reason": outcome.reason.value if outcome.reason else None,
                "observation": _obs_payload(outcome.observation),
                "text": text,
                "step_index": state.step_index,
            }


def _parse_fields(body: str) -> dict[str, str]:
    fields = {}
    for line in body.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RequestError(422, f"expected key=value, got {line!r}")
        fields[key.strip()] = value.strip()
    return fields


def case_from_fields(fields: dict[str, str]) -> TestCase:
    try:
        if "case" in fields:
            return case_from_record(json.loads(fields["case"]))
        kind = EnvKind(fields["kind"])
        mode = Mode(fields["mode"].upper())
        return gen_case(int(fields["seed"]), mode, kind)
    except (KeyError, ValueError, TypeError) as exc:
        raise RequestError(422, f"bad session request: {exc}") from None


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # small request/response pairs otherwise stall on delayed ACKs

    def log_message(self, fmt, *args):
        logger.debug("%s - " + fmt, self.address_string(), *args)

    def _body(self) -> str:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length).decode("utf-8") if length else ""

    def _send(self, status: int, payload, content_type="application/json"):
        data = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
        raw = data.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _dispatch(self, method: str):
        store = self.server.store
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            body = self._body()
            if method == "GET" and parts == ["health"]:
                return self._send(200, {"status": "ok"})
            if method == "POST" and parts == ["sessions"]:
                fields = _parse_fields(body)
                budget = int(fields.pop("budget")) if "budget" in fields else None
                _, _, info = store.create(case_from_fields(fields), budget)
                return self._send(201, info)
            if method == "POST" and len(parts) == 3 and parts[0] == "sessions" and parts[2] == "step":
                return self._send(200, store.step(parts[1], body))
            if method == "GET" and len(parts) == 3 and parts[0] == "sessions" and parts[2] == "transcript":
                return self._send(200, store.get(parts[1]).transcript().to_jsonl(), "application/x-ndjson")
            raise RequestError(404, f"no route for {method} {self.path}")
        except RequestError as exc:
            self._send(exc.status, {"error": str(exc)})
        except ValueError as exc:
            self._send(422, {"error": str(exc)})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


class SessionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = 8765):
        super().__init__((host, port), _Handler)
        self.store = SessionStore()

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(host: str = "127.0.0.1", port: int = 8765) -> None:
    server = SessionServer(host, port)
    logger.info("session service listening on %s", server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


class ServiceError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class SessionClient:
    """Thin client for the session service."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.http = requests.Session()

    def _post(self, path: str, body: str):
        resp = self.http.post(self.base_url + path, data=body.encode("utf-8"), timeout=self.timeout,
                              headers={"Content-Type": "text/plain; charset=utf-8"})
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, resp.json().get("error", ""))
        return resp.json()

    def create(self, case: TestCase | None = None, kind=None, mode=None, seed=None,
               budget: int | None = None) -> dict:
        if case is not None:
            lines = ["case=" + json.dumps(case_to_record(case), separators=(",", ":"))]
        else:
            lines = [f"kind={EnvKind(kind).value}", f"mode={Mode(mode).value}", f"seed={seed}"]
        if budget is not None:
            lines.append(f"budget={budget}")
        return self._post("/sessions", "\n".join(lines))

    def step(self, session: str, action: int | str, raw: str = "") -> dict:
        return self._post(f"/sessions/{session}/step", f"{action}\n{raw}")

    def transcript(self, session: str) -> Transcript:
        resp = self.http.get(f"{self.base_url}/sessions/{session}/transcript", timeout=self.timeout)
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, resp.json().get("error", ""))
        return Transcript.from_jsonl(resp.text)


class RemoteEpisode:
    """Episode backend that plays through a :class:`SessionClient`."""

    def __init__(self, client: SessionClient, case: TestCase, budget: int):
        self.client = client
        info = client.create(case, budget=budget)
        self.session = info["session"]
        self.system_prompt = info["system_prompt"]
        self.opening = info["opening"]

    def submit(self, action: int | None, raw: str) -> Submission:
        r = self.client.step(self.session, INVALID_TOKEN if action is None else action, raw)
        return Submission(r["valid"], r["text"], r["terminated"], r["reason"], None)


def run_remote_episode(agent, client: SessionClient, case: TestCase, config: RunConfig = RunConfig(),
                       ice_episodes=(), label: str | None = None) -> Transcript:
    """Free-play episode against the service; follow flags come from the server."""
    if config.teacher_guided:
        raise ValueError("teacher guiding needs the oracle in-process")
    label = label if label is not None else getattr(agent, "label", type(agent).__name__)
    if hasattr(agent, "fork"):
        agent = agent.fork(case.seed)
    backend = RemoteEpisode(client, case, config.budget_for(case))
    local = run_free_play(agent, backend, case, config, ice_episodes, label)
    served = client.transcript(backend.session)
    out = Transcript(case, local.protocol, local.budget, local.agent, local.ice,
                     reason=local.reason, aborted=local.aborted, error=local.error)
    for mine, theirs in zip(local.steps, served.steps):
        mine.follow = theirs.follow
        out.append(mine)
    return out
