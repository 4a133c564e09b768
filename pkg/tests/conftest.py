import time

import numpy as np
import pytest

from transfer_risk import _kernels_py
from transfer_risk.gaussian import GaussianTask

try:
    from transfer_risk import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    BACKENDS.append(pytest.param(_kernels_c, id="compiled"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


def make_rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def rng():
    return make_rng(12345)


def random_spd(rng, n, floor=0.1):
    a = rng.standard_normal((n, n))
    return a @ a.T / n + floor * np.eye(n)


def random_task(rng, d, l=1, floor=0.1):
    cov = random_spd(rng, d + l, floor)
    mean = rng.standard_normal(d + l)
    return GaussianTask.from_joint(mean, cov, d)


def random_path(rng, n, d, scale=0.3):
    return np.cumsum(scale * rng.standard_normal((n, d)), axis=0)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: dict[int, str] = {}


class _Criterion:
    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        ok = exc_type is None and elapsed < self.limit
        skipped = exc_type is not None and issubclass(exc_type, pytest.skip.Exception)
        status = "SKIP" if skipped else "PASS" if ok else "FAIL"
        why = "" if exc_type is None else f" ({exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES[self.number] = (
            f"criterion {self.number}: {status} {self.title} "
            f"[{elapsed:.2f}s / limit {self.limit:g}s]{why}"
        )
        if exc_type is None:
            assert elapsed < self.limit, f"criterion {self.number} took {elapsed:.2f}s (limit {self.limit}s)"
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
