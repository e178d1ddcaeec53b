import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def _first_line(rep):
    crash = getattr(rep.longrepr, "reprcrash", None)
    text = crash.message if crash else rep.longreprtext
    return (text.strip().splitlines() or ["failed"])[0]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        prev = _criteria.get(number, (title, True, ""))
        ok = prev[1] and rep.passed
        detail = prev[2] or ("" if rep.passed else _first_line(rep)[:160])
        _criteria[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, detail = _criteria[number]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
