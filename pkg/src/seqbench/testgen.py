"""Seeded test-case generation and the test-set file format.

All randomness comes from numpy's PCG64 bit generator, seeded directly with
the case seed, so a ``(seed, mode, kind)`` triple fully determines a case.
Trees are uniform random labelled trees obtained by decoding a uniformly
drawn Prüfer sequence.

File layout (UTF-8, one JSON object per line, keys sorted, no spaces)::

    {"count":400,"format_version":1,"kind":"DFS","mode":"EASY","prng":"PCG64","seed":7}
    {"edges":[[0,3],[1,3],...],"kind":"DFS","mode":"EASY","num_nodes":8,"seed":...}
    ...

Guessing records carry ``low``, ``high`` and ``target`` instead of
``edges``/``num_nodes``.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from seqbench.envs import (
    MODE_PARAMS,
    EnvKind,
    Family,
    InvalidCaseError,
    Mode,
    TestCase,
    num_nodes,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PRNG_NAME = "PCG64"
_SEED_BOUND = 2**63


class TestSetFormatError(ValueError):
    """Malformed or inconsistent test-set file; message names the record."""

    __test__ = False


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def prufer_to_edges(sequence, n: int) -> tuple[tuple[int, int], ...]:
    """Decode a Prüfer sequence of length ``n - 2`` into a canonical edge list."""
    sequence = [int(x) for x in sequence]
    if n < 2:
        if sequence:
            raise ValueError("trees with fewer than 2 nodes have an empty Prüfer sequence")
        return ()
    if len(sequence) != n - 2:
        raise ValueError(f"Prüfer sequence for {n} nodes must have length {n - 2}")
    if any(not 0 <= x < n for x in sequence):
        raise ValueError("Prüfer entries must lie in [0, n)")
    degree = [1] * n
    for x in sequence:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in sequence:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, x), max(leaf, x)))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    a, b = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((min(a, b), max(a, b)))
    return tuple(sorted(edges))


def gen_guess_case(seed: int, mode: Mode, kind: EnvKind = EnvKind.GUESS_NUM) -> TestCase:
    params = MODE_PARAMS[mode]
    target = int(_rng(seed).integers(params.low, params.high, endpoint=True))
    return TestCase(kind, mode, seed, low=params.low, high=params.high, target=target)


def gen_tree_case(seed: int, mode: Mode, kind: EnvKind) -> TestCase:
    if not kind.is_graph:
        raise ValueError(f"{kind.value} is not a graph environment")
    m = num_nodes(kind, mode)
    sequence = _rng(seed).integers(0, m, size=max(m - 2, 0))
    return TestCase(kind, mode, seed, num_nodes=m, edges=prufer_to_edges(sequence, m))


def gen_case(seed: int, mode: Mode, kind: EnvKind) -> TestCase:
    if kind.family is Family.GUESS:
        return gen_guess_case(seed, mode, kind)
    return gen_tree_case(seed, mode, kind)


@dataclass(frozen=True)
class TestSet:
    __test__ = False

    kind: EnvKind
    mode: Mode
    seed: int
    cases: tuple[TestCase, ...]
    format_version: int = FORMAT_VERSION

    @property
    def canonical(self) -> bool:
        return len(self.cases) == MODE_PARAMS[self.mode].testset_size

    def __len__(self) -> int:
        return len(self.cases)


def generate_testset(kind: EnvKind, mode: Mode, seed: int, count: int | None = None) -> TestSet:
    """Draw ``count`` distinct cases; per-case seeds come from a PCG64 stream on ``seed``."""
    if count is None:
        count = MODE_PARAMS[mode].testset_size
    elif count != MODE_PARAMS[mode].testset_size:
        logger.warning("non-canonical test-set size %d for %s mode", count, mode.value)
    stream = _rng(seed)
    cases: list[TestCase] = []
    seen: set[tuple] = set()
    while len(cases) < count:
        case = gen_case(int(stream.integers(0, _SEED_BOUND)), mode, kind)
        key = case.content_key()
        if key in seen:
            continue
        seen.add(key)
        cases.append(case)
    return TestSet(kind, mode, seed, tuple(cases))


def case_to_record(case: TestCase) -> dict:
    record = {"kind": case.kind.value, "mode": case.mode.value, "seed": case.seed}
    if case.kind.family is Family.GUESS:
        record.update(low=case.low, high=case.high, target=case.target)
    else:
        record.update(num_nodes=case.num_nodes, edges=[list(e) for e in case.edges])
    return record


def case_from_record(record: dict) -> TestCase:
    kind = EnvKind(record["kind"])
    mode = Mode(record["mode"])
    seed = int(record["seed"])
    if kind.family is Family.GUESS:
        case = TestCase(kind, mode, seed, low=int(record["low"]), high=int(record["high"]),
                        target=int(record["target"]))
    else:
        edges = tuple((int(a), int(b)) for a, b in record["edges"])
        if edges != tuple(sorted((min(e), max(e)) for e in edges)):
            raise InvalidCaseError("edges are not in canonical order")
        case = TestCase(kind, mode, seed, num_nodes=int(record["num_nodes"]), edges=edges)
    case.validate()
    return case


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dumps_testset(testset: TestSet) -> str:
    header = {
        "format_version": testset.format_version,
        "kind": testset.kind.value,
        "mode": testset.mode.value,
        "seed": testset.seed,
        "count": len(testset.cases),
        "prng": PRNG_NAME,
    }
    lines = [_dumps(header)] + [_dumps(case_to_record(c)) for c in testset.cases]
    return "\n".join(lines) + "\n"


def loads_testset(text: str) -> TestSet:
    lines = text.splitlines()
    if not lines:
        raise TestSetFormatError("empty test-set file")
    try:
        header = json.loads(lines[0])
        version = header["format_version"]
    except (ValueError, KeyError, TypeError) as exc:
        raise TestSetFormatError(f"malformed header: {exc}") from None
    if version != FORMAT_VERSION:
        raise TestSetFormatError(f"format version {version} is not supported (expected {FORMAT_VERSION})")
    try:
        kind, mode = EnvKind(header["kind"]), Mode(header["mode"])
        seed, count = int(header["seed"]), int(header["count"])
    except (ValueError, KeyError) as exc:
        raise TestSetFormatError(f"malformed header: {exc}") from None

    cases: list[TestCase] = []
    seen: dict[tuple, int] = {}
    for index, line in enumerate(lines[1:]):
        try:
            case = case_from_record(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise TestSetFormatError(f"case {index}: malformed record ({exc})") from None
        if case.kind is not kind or case.mode is not mode:
            raise TestSetFormatError(f"case {index}: kind/mode differ from header")
        key = case.content_key()
        if key in seen:
            raise TestSetFormatError(f"case {index}: duplicate of case {seen[key]}")
        seen[key] = index
        cases.append(case)
    if len(cases) != count:
        raise TestSetFormatError(
            f"case {len(cases)}: file ends after {len(cases)} records, header promises {count}"
        )
    return TestSet(kind, mode, seed, tuple(cases), version)


def save_testset(testset: TestSet, path) -> None:
    Path(path).write_text(dumps_testset(testset), encoding="utf-8")


def load_testset(path) -> TestSet:
    return loads_testset(Path(path).read_text(encoding="utf-8"))


def testset_digest(testset: TestSet) -> str:
    return hashlib.sha256(dumps_testset(testset).encode("utf-8")).hexdigest()
