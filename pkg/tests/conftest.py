from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.failed and not detail and rep.longrepr is not None:
        detail = str(rep.longrepr).strip().splitlines()[-1]
    _RESULTS[marker.args[0]].append((rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok = all(r[0] for r in _RESULTS[n])
        detail = "; ".join(r[1] for r in _RESULTS[n] if r[1])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
