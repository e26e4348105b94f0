import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scmlink.bandplan import Band, BandPlan
from scmlink.modem import ModulationSpec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PUBLISHED_CENTERS = (3.9e9, 12e9, 17.3e9, 21.3e9, 24.5e9, 27.4e9, 29.95e9)
PUBLISHED_BAUDS = (7.01e9, 5.11e9, 3.81e9, 2.76e9, 2.9e9, 2.62e9, 1.92e9)
PUBLISHED_ROLLOFFS = (0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.01)
UNIFORM_ORDERS = (128, 16, 8, 8, 4, 4, 2)
TRAINING = (500, 300, 300, 300, 200, 200, 100)

# one line per acceptance criterion, printed in the terminal summary
CRITERIA = {}


def record_criterion(num, title, ok, detail=""):
    CRITERIA[num] = (title, bool(ok), detail)
    print(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        title, ok, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}")


def published_plan(orders=UNIFORM_ORDERS, kind="uniform", entropies=None):
    bands = []
    for k, (c, b, r, m) in enumerate(zip(PUBLISHED_CENTERS, PUBLISHED_BAUDS, PUBLISHED_ROLLOFFS, orders)):
        spec = ModulationSpec(kind, m, None if entropies is None else entropies[k])
        bands.append(Band(k + 1, c, b, r, spec))
    return BandPlan(tuple(bands), 31e9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_plan():
    return published_plan()


def db(x):
    return 10 * math.log10(x)
