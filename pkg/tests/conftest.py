import numpy as np
import pytest

from dualcert.generator import GeneratorConfig, generate_instance
from dualcert.instances import ball_projection, halfsquare_equality, halfsquare_inequality
from dualcert.reference import compute_reference


@pytest.fixture
def t1():
    return halfsquare_inequality()


@pytest.fixture
def eq1():
    return halfsquare_equality()


@pytest.fixture(scope="session")
def ball():
    return ball_projection()


@pytest.fixture(scope="session")
def ball_ref(ball):
    return compute_reference(ball)


@pytest.fixture(scope="session")
def gen_inst():
    return generate_instance(GeneratorConfig(seed=1))


@pytest.fixture(scope="session")
def gen_ref(gen_inst):
    return compute_reference(gen_inst)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (passed, detail); printed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
