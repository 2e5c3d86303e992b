import re

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_runtest_makereport(item, call):
    if call.when != "call":
        return
    m = re.match(r"test_criterion_(\d+)(?:_(\w+))?", item.name)
    if not m:
        return
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _acceptance[int(m.group(1))] = (m.group(2) or "", outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for k in sorted(_acceptance):
        name, outcome = _acceptance[k]
        terminalreporter.write_line(
            f"ACCEPTANCE {k:2d} {name:<28s} {outcome}"
        )
