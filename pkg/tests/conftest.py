import numpy as np
import pytest
import torch

torch.set_num_threads(1)

# filled by test_acceptance.py, printed once at the end of the session
ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def f64(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))
