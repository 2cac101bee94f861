import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, label): tag a test as part of a numbered "
        "acceptance criterion; the run summary prints one line per number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    rep = out.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    by_num = {}
    for reps in terminalreporter.stats.values():
        for rep in reps:
            tag = getattr(rep, "criterion", None)
            if tag is None:
                continue
            num, label = tag
            entry = by_num.setdefault(num, {"label": label, "outcomes": []})
            entry["outcomes"].append(rep.outcome)
    if not by_num:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(by_num):
        entry = by_num[num]
        outcomes = entry["outcomes"]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(
            f"criterion {num:2d}: {verdict} — {entry['label']}")
