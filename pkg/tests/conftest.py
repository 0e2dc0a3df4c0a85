import pytest

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class Recorder:
    def __init__(self, number: int):
        self.number = number
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok: bool) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    def finish(self):
        ok = all(passed for _, passed in self.checks)
        failed = [label for label, passed in self.checks if not passed]
        detail = "; ".join(label for label, _ in self.checks) if ok else "failed: " + "; ".join(failed)
        ACCEPTANCE[self.number] = (ok, detail)
        assert ok, detail


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = Recorder(marker.args[0])
    yield rec
    if rec.number not in ACCEPTANCE:
        ACCEPTANCE[rec.number] = (False, "raised before all checks ran")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
