import pytest

_LINES: list[str] = []


class CriterionReport:
    """Collects the sub-checks of one acceptance criterion into a single line."""

    def __init__(self, tag: str, title: str):
        self.tag, self.title = tag, title
        self.checks: list[tuple[str, bool, str]] = []

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append((name, bool(ok), detail))

    def finish(self) -> None:
        ok = all(c[1] for c in self.checks)
        parts = "; ".join(f"{n}{' ' + d if d else ''}{'' if o else ' [FAIL]'}" for n, o, d in self.checks)
        line = f"{self.tag} {'PASS' if ok else 'FAIL'} {self.title}: {parts}"
        _LINES.append(line)
        print(line)
        failed = [n for n, o, _ in self.checks if not o]
        assert not failed, f"{self.tag} failed sub-checks: {failed}"


@pytest.fixture
def criterion():
    return CriterionReport


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
