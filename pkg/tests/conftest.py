import numpy as np
import pytest

from nbfi.core import Scenario, allocation_from_radii, single_bn_allocation


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def single(bn, r1=1.0, lam=1.0, **kw):
    return Scenario(1000, r1, lam, single_bn_allocation(bn, r1), **kw)


def uniform_mix(r1=1.0, lam=1.0):
    radii = [r1, r1 * 0.75**0.5, r1 * 0.5**0.5, r1 * 0.5]
    return Scenario(1000, r1, lam, allocation_from_radii(radii, r1))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
