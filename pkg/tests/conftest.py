import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_truth():
    """200 x 300 semi-synthetic ground truth with the default marginal."""
    from mnarec.experiments import ExperimentSpec, build_ground_truth

    return build_ground_truth(ExperimentSpec(seed=0))


def pytest_terminal_summary(terminalreporter):
    """Repeat the one-line verdict of every acceptance criterion that ran."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when == "call" and "test_acceptance" in report.nodeid:
                lines += [ln for ln in report.capstdout.splitlines() if ln.startswith("[criterion")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda ln: int(ln.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
