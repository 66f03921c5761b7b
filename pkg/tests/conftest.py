import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(acc.RESULTS):
        parts = acc.RESULTS[crit]
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"{crit} {'PASS' if ok else 'FAIL'}")
        for passed, detail in parts:
            terminalreporter.write_line(f"    [{'pass' if passed else 'fail'}] {detail}")
