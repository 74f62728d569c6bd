import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_feature(rng, h=None, w=None, c=None, spread=3.0):
    h = h or int(rng.integers(2, 9))
    w = w or int(rng.integers(2, 9))
    c = c or int(rng.integers(1, 7))
    scale = rng.uniform(0.05, spread, size=c)
    shift = rng.normal(0, spread, size=c)
    return (rng.normal(size=(h, w, c)) * scale + shift).astype(np.float32)


def rel_err_stats(got, want):
    """Per-channel relative errors of (mu, sigma).

    The mean is measured against max(|mu|, sigma): a mean that happens to sit
    near zero has no meaningful relative scale of its own.
    """
    mu_den = np.maximum(np.abs(want.mu), want.sigma)
    return (np.abs(got.mu - want.mu) / mu_den, np.abs(got.sigma - want.sigma) / want.sigma)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed at session end."""

    def record(name, ok, detail):
        _ACCEPTANCE.append(f"{name:<5} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s[2:5].strip())):
            terminalreporter.write_line(line)
