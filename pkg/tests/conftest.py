"""Shared fixtures and the acceptance-criteria terminal summary."""

import numpy as np
import pytest

from simdsparse.model import init_params

# (number, name, passed, detail) tuples appended by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


def record_criterion(num: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((num, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"[{status}] criterion {num:2d} ({name}): {detail}")


@pytest.fixture
def tiny_params():
    """Small float64 decoder (H=8, B=2, M=2, C=4) for gradient checks."""
    rng = np.random.default_rng(11)
    params = init_params(rng, hidden=8, bands=2, samples_per_step=2,
                         cond_dim=4)
    params = {k: v.astype(np.float64) for k, v in params.items()}
    for k, v in params.items():
        if v.ndim == 1:
            params[k] = rng.normal(0.0, 0.3, v.shape)
    return params


@pytest.fixture
def tiny_batch():
    """Inputs/targets matching `tiny_params` dims: (N=3, T=5)."""
    rng = np.random.default_rng(12)
    inp = rng.normal(0.0, 1.0, (3, 5, 8))
    target = rng.normal(0.0, 0.5, (3, 5, 2, 2))
    return inp, target
