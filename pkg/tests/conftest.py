import pytest

from seqsample.line_store import open_store


@pytest.fixture
def make_store(tmp_path):
    """Write bytes to a fresh file and open it as a store."""
    handles = []
    counter = [0]

    def _make(data: bytes, **kw):
        counter[0] += 1
        path = tmp_path / f"store_{counter[0]}.csv"
        path.write_bytes(data)
        fh = open_store(path, **kw)
        handles.append(fh)
        return fh

    yield _make
    for fh in handles:
        fh.close()


# -- acceptance reporting ------------------------------------------------------------
# Tests marked ``criterion(k, title)`` get a ``measured`` dict to fill in;
# one PASS/FAIL line per criterion is printed in the terminal summary.

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def measured(request):
    d = {}
    request.node.measured = d
    return d


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = mark.args
    detail = ", ".join(f"{k}={v}" for k, v in getattr(item, "measured", {}).items())
    status = "PASS" if rep.passed else "FAIL"
    if number in _criteria:  # several tests may share one criterion
        _, prev_status, prev_detail = _criteria[number]
        status = "FAIL" if "FAIL" in (prev_status, status) else "PASS"
        detail = "; ".join(d for d in (prev_detail, detail) if d)
    _criteria[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, detail = _criteria[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}" + (f" | {detail}" if detail else ""))
