import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rgg.bench import Scenario, ObstacleSpec, prepare, with_overrides

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


def random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scenario() -> Scenario:
    return Scenario(
        name="small",
        n_nodes=40,
        k_neighbors=6,
        obstacles=(ObstacleSpec("beam", (6.0, 2.0, 2.0)), ObstacleSpec("cube", (3.0, 3.0, 3.0))),
        iterations=15,
        rotate=True,
    )


@pytest.fixture(scope="session")
def small_prepared(small_scenario):
    return prepare(small_scenario)


@pytest.fixture(scope="session")
def eager_scenario(small_scenario):
    return with_overrides(small_scenario, mode="eager")
