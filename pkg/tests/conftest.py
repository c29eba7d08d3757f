import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[int, str] = {}


def record(number: int, name: str, ok: bool, detail: str) -> None:
    """Store (and echo) the one-line verdict for an acceptance criterion."""
    line = f"criterion {number:>2} {name}: {'PASS' if ok else 'FAIL'} | {detail}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria (slow training runs)")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
