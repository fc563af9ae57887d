"""Collects acceptance verdicts and prints one line per criterion at the end."""

ACCEPTANCE = {}


def record(key, passed, detail):
    ACCEPTANCE[key] = (bool(passed), detail)
    return passed


def _sort_key(key):
    head = key.split()[0]
    return (0, int(head)) if head.isdigit() else (1, key)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=_sort_key):
        passed, detail = ACCEPTANCE[key]
        label = f"criterion {key}" if key.split()[0].isdigit() else key
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
