import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqbench.envs import EnvKind, Mode, TestCase  # noqa: E402
from seqbench.service import SessionClient, SessionServer  # noqa: E402

_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _criteria[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria.items():
        terminalreporter.write_line(f"{outcome:4}  {name}")


@pytest.fixture
def small_dfs_case():
    # 0-1, 0-2, 1-3
    return TestCase(EnvKind.DFS, Mode.EASY, 0, num_nodes=4, edges=((0, 1), (0, 2), (1, 3)))


@pytest.fixture
def guess_case():
    return TestCase(EnvKind.GUESS_NUM, Mode.EASY, 0, low=32, high=32800, target=64)


@pytest.fixture(scope="session")
def service():
    server = SessionServer(port=0)
    server.start_background()
    yield server
    server.shutdown()
    server.server_close()


@pytest.fixture
def client(service):
    return SessionClient(service.url)
