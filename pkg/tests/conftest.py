import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


class Verdicts:
    def record(self, criterion: str, ok: bool, detail: str = "") -> bool:
        _VERDICTS[criterion] = (bool(ok), detail)
        return bool(ok)


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda k: int(k.split()[0])):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}  {detail}")
