import numpy as np
import pytest

from boomaudio.schedule import build_schedule


@pytest.fixture(scope="session")
def cosine():
    return build_schedule("cosine", 100)


@pytest.fixture(scope="session")
def linear():
    return build_schedule("linear-alphabar", 100)


class ConstantX0:
    """Oracle denoiser whose implied clean estimate is always ``c``."""

    def __init__(self, schedule, c):
        self.s = schedule
        self.c = c

    def __call__(self, x_t, t, class_id=None):
        # x0 = alpha x - sigma v  =>  v = (alpha x - c) / sigma
        return (self.s.alpha[t] * x_t - self.c) / self.s.sigma[t]


class TrueX0:
    """Oracle that always predicts the clean latent ``z0``."""

    def __init__(self, schedule, z0):
        self.s = schedule
        self.z0 = z0

    def __call__(self, x_t, t, class_id=None):
        return (self.s.alpha[t] * x_t - self.z0) / self.s.sigma[t]


def shrink_denoiser(x_t, t, class_id=None):
    """Cheap stand-in: predicts v = 0, i.e. x0_hat = alpha_t * x_t."""
    return np.zeros_like(x_t)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


#: One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
