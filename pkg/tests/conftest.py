import time

import pytest

_LINES = []
_INFO = []


@pytest.fixture
def acceptance_info():
    """Append a reported-only line to the acceptance summary."""
    return _INFO.append


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Call ``criterion(number, title)`` first, then ``.detail(text)`` as
    numbers come in; the line is written whether or not the test body
    reached its assertions.
    """
    state = {"start": time.perf_counter(), "details": []}

    class Recorder:
        def __call__(self, number, title):
            state["number"], state["title"] = number, title
            return self

        def detail(self, text):
            state["details"].append(text)

    yield Recorder()
    if "number" not in state:
        return
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    secs = time.perf_counter() - state["start"]
    extra = "; ".join(state["details"])
    _LINES.append(f"{status} criterion {state['number']}: {state['title']} ({secs:.1f} s){': ' + extra if extra else ''}")
    print(_LINES[-1])


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
        for line in _INFO:
            terminalreporter.write_line(f"INFO {line}")
