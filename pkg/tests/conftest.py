import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

ACCEPTANCE = []


@pytest.fixture
def accept():
    """Record one acceptance criterion outcome; fails the test if it did not pass."""

    def record(number, name, ok, detail=""):
        ACCEPTANCE.append((number, name, bool(ok), detail))
        print(f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'} {name} {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{number:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}")
