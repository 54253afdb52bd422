import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
MAN_DIR = FIXTURES / "man"
RM_MAP = FIXTURES / "rm_rmdir.tagmap.xml"


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """Point every TAGMAN_* variable into a scratch home; no daemon."""
    home = tmp_path / "home"
    home.mkdir()
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.setenv("TAGMAN_STORE", str(home / ".tagman" / "store.tags"))
    monkeypatch.setenv("TAGMAN_USER_STORE", str(home / ".tagman" / "user.tags"))
    monkeypatch.setenv("TAGMAN_HISTORY", str(home / ".bash_history"))
    monkeypatch.setenv("TAGMAN_PATH", "")
    monkeypatch.setenv("TAGMAN_DAEMON", "none")
    monkeypatch.setenv("TAGMAN_USER", "alice")
    monkeypatch.setenv("TAGMAN_NODE_ID", "alpha")
    return home


# -- acceptance report ------------------------------------------------------

_outcomes: dict[int, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(marker.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        runs = _outcomes[number]
        ok = all(outcome == "passed" for _, outcome in runs)
        failed = [name for name, outcome in runs if outcome != "passed"]
        detail = f"failed: {', '.join(failed)}" if failed else f"{len(runs)} tests"
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  ({detail})")
