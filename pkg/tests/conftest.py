import numpy as np
import pytest
from hypothesis import settings

from topoact.ph import barcode

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # first call loads or compiles the jitted kernels; keep that out of timings
    barcode(np.random.default_rng(0).random((12, 2)))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    entry = item.config._acceptance.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] &= rep.passed
    entry["details"] += [str(v) for k, v in rep.user_properties if k == "detail"]
    if rep.failed:
        entry["details"].append(rep.longrepr.reprcrash.message if hasattr(rep.longrepr, "reprcrash") else "failed")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        r = results[number]
        status = "PASS" if r["ok"] else "FAIL"
        detail = "; ".join(r["details"])
        terminalreporter.write_line(f"criterion {number:2d} {status}  {r['title']}" + (f"  [{detail}]" if detail else ""))
