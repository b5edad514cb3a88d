import pytest

RESULTS: dict[int, tuple[bool, str]] = {}
EXPECTED = range(1, 11)


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion for the summary."""
    def record(number: int, checks: dict, elapsed: float, limit: float, note: str = ""):
        checks = dict(checks)
        checks[f"runtime {elapsed:.2f}s < {limit:g}s"] = elapsed < limit
        failed = [name for name, ok in checks.items() if not ok]
        detail = "; ".join(failed) if failed else ", ".join(checks)
        RESULTS[number] = (not failed, f"{detail}{'; ' + note if note else ''}")
        assert not failed, f"criterion {number} failed: {'; '.join(failed)}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in EXPECTED:
        if number in RESULTS:
            ok, detail = RESULTS[number]
            terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        else:
            terminalreporter.write_line(f"criterion {number}: FAIL (not run or errored)")
