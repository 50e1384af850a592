import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "CRITERIA", None):
        return
    terminalreporter.section("acceptance criteria")
    for num, title in mod.CRITERIA.items():
        ok, detail = mod.RESULTS.get(num, (False, "not run or errored"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {num:2d}. {title}: {detail}")
