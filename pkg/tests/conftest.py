import json
import os
import time

import pytest

from pdmpjump.experiments import ExperimentConfig, run_bench
from pdmpjump.model import tcp_model
from pdmpjump.simulate import simulate_chain

JOBS = min(4, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def tcp():
    return tcp_model(0.4)


@pytest.fixture(scope="session")
def chain(tcp):
    """A stationary-looking TCP chain shared by the estimator tests."""
    return simulate_chain(tcp, 1.0, 10_000, seed=11)


@pytest.fixture(scope="session")
def full_bench(tmp_path_factory):
    """Default-configuration bench (100 replicates, n in {1e3, 1e4}) as a parsed report."""
    out = tmp_path_factory.mktemp("bench")
    started = time.perf_counter()
    report, _ = run_bench(ExperimentConfig(), out, jobs=JOBS)
    data = json.loads(report.to_json())
    data["elapsed"] = time.perf_counter() - started
    data["out_dir"] = str(out)
    return data


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
