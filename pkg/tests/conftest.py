import pytest
from hypothesis import HealthCheck, settings

from helpers import TINY

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        ok = report.passed
        prev = _CRITERIA.get(number)
        details = (prev[2] if prev else []) + [v for k, v in item.user_properties if k == "measured"]
        _CRITERIA[number] = (title, ok and (prev is None or prev[1]), details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
        for line in details:
            terminalreporter.write_line(f"    {line}")


# -- shared tiny datasets --------------------------------------------------------


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    from fewshot.data import SyntheticSpec, generate_synthetic

    root = tmp_path_factory.mktemp("tiny")
    generate_synthetic(SyntheticSpec(**TINY), root)
    return root


@pytest.fixture(scope="session")
def tiny_shifted_root(tmp_path_factory):
    from fewshot.data import SyntheticSpec, generate_synthetic

    root = tmp_path_factory.mktemp("tiny_shifted")
    spec = SyntheticSpec(**{**TINY, "classes": {"test": 5}}, center_shift=3.0, label_prefix="t", seed=1)
    generate_synthetic(spec, root)
    return root
