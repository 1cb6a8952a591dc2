import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: ``acceptance(n, label, ok, detail)``."""
    results = request.config.stash[_RESULTS]

    def record(n, label, ok, detail=""):
        results[(n, label)] = (bool(ok), detail)
        print(f"[acceptance {n:2d}] {'PASS' if ok else 'FAIL'} {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in sorted(results):
        ok, detail = results[(n, label)]
        terminalreporter.write_line(f"{n:2d}. {'PASS' if ok else 'FAIL'}  {label}  {detail}")
