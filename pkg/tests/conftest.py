import numpy as np
import pytest

from qmeaudit import generators as gen
from qmeaudit.baths import BathSpec, SpectralFunction
from qmeaudit.diagnostics import default_eps_grid
from qmeaudit.operators import build_xxz

UNIFORM = (1.0, 1.0, 1.0)
UNEQUAL = (1.0, 1.5, 2.0)
ANISOTROPY = 0.75

ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def chain_baths(beta_left, beta_right, n_sites=3, mu=-0.5, cutoff=10.0):
    spec = SpectralFunction(cutoff)
    return [BathSpec(beta_left, mu, 1, spec, label="L"), BathSpec(beta_right, mu, n_sites, spec, label="R")]


class Setup:
    """A system, its baths and all four generators at unit coupling."""

    def __init__(self, fields, g, beta_left, beta_right):
        self.system = build_xxz(len(fields), fields, g, ANISOTROPY)
        self.baths = chain_baths(beta_left, beta_right, len(fields))
        self.beta, self.mu = beta_left, -0.5
        self.parts = {k: gen.build(k, self.system, self.baths) for k in gen.KINDS}

    def at(self, kind, eps):
        return self.parts[kind].with_epsilon(eps)


_SETUPS = {}


def setup_for(fields, g, beta_left, beta_right):
    key = (tuple(fields), g, beta_left, beta_right)
    if key not in _SETUPS:
        _SETUPS[key] = Setup(fields, g, beta_left, beta_right)
    return _SETUPS[key]


@pytest.fixture(scope="session")
def eq_uniform():
    return setup_for(UNIFORM, 0.5, 1.0, 1.0)


@pytest.fixture(scope="session")
def eq_unequal():
    return setup_for(UNEQUAL, 0.5, 1.0, 1.0)


@pytest.fixture(scope="session")
def noneq():
    return setup_for(UNIFORM, 0.5, 5.0, 0.5)


@pytest.fixture(scope="session")
def eps_grid():
    return default_eps_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
