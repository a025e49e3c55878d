import pytest

ACCEPTANCE = {}  # criterion number -> (title, [(part, ok, detail), ...])


@pytest.fixture
def record():
    def _record(n, title, part, ok, detail):
        old, parts = ACCEPTANCE.get(n, ("", []))
        parts.append((part, bool(ok), detail))
        ACCEPTANCE[n] = (old or title, parts)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{p[0]}: {p[2]}" + ("" if p[1] else " [FAIL]") for p in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} {n:2d}. {title} | {detail}")
