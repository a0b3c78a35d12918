import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    verdict = "PASS" if report.passed else "FAIL"
    _criteria.append((props["criterion"], verdict, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(_criteria):
        terminalreporter.write_line(f"{verdict}  {name}  {detail}".rstrip())
