import functools

import numpy as np
import pytest

from platoon_dos.model import PlatoonParams
from platoon_dos.synthesis import SynthesisOptions, synthesize


@pytest.fixture(scope="session")
def params():
    return PlatoonParams()


@functools.lru_cache(maxsize=None)
def cached_synthesis(p: int, theorem: int = 2):
    return synthesize(PlatoonParams(), SynthesisOptions(p=p), theorem=theorem)


@pytest.fixture(scope="session")
def synth():
    return cached_synthesis


def rk4(f, x0, s0, s1, n):
    """Classical fixed-step RK4; f(s, x)."""
    x = np.array(x0, dtype=float)
    hs = (s1 - s0) / n
    s = s0
    for _ in range(n):
        k1 = f(s, x)
        k2 = f(s + hs / 2, x + hs / 2 * k1)
        k3 = f(s + hs / 2, x + hs / 2 * k2)
        k4 = f(s + hs, x + hs * k3)
        x = x + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += hs
    return x


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
