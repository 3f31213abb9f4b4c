import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

W_STAR = (0.2601356817654797 + 0.6336471166735299j, 0.2632648156474678 + 0.5575082316681955j)


@pytest.fixture(scope="session")
def fixture_data():
    from qrwd.cli import load_fixture
    return load_fixture()


@pytest.fixture(scope="session")
def toy_cfg(fixture_data):
    from qrwd.dynamics import ToyConfig
    return ToyConfig.from_json(fixture_data["toy"])


@pytest.fixture(scope="session")
def toy_params(toy_cfg):
    from qrwd.qrmap import ParameterSequence
    return ParameterSequence(W_STAR, toy_cfg.schedule().N, 0.5)


@pytest.fixture(scope="session")
def toy_instance(toy_cfg, toy_params):
    from qrwd.dynamics import ToyInstance
    return ToyInstance(toy_cfg, toy_params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary -----------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = getattr(report, "criterion", None)
    if crit and _CRITERIA.get(crit) != "failed":
        # a criterion split over several tests fails if any part fails
        _CRITERIA[crit] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome in sorted(_CRITERIA.items()):
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {num:2d} {status}  {title}")
    path = os.environ.get("QRWD_ACCEPTANCE_JSON")
    if path:
        with open(path, "w") as fh:
            json.dump({f"{n}": o for (n, _), o in sorted(_CRITERIA.items())}, fh, indent=1)
