import numpy as np
import pytest

from cloudmhe import (MheConfig, RoadDatabase, RoadProfile, RoadSegment,
                      SimConfig, SuspensionParams, build_model, zoh)

# The demonstration scenario's initial pose (angles already in radians).
SCENARIO_X0 = (0.01, -0.1, -0.01, 0.1, 0.03, 0.2, -0.08, 0.2, 0.06, 0.04,
               -5 * np.pi / 180, 2 * np.pi / 180, 2 * np.pi / 180, -3 * np.pi / 180)


@pytest.fixture(scope="session")
def params():
    return SuspensionParams()


@pytest.fixture(scope="session")
def model(params):
    return build_model(params)


@pytest.fixture(scope="session")
def discrete(model):
    return zoh(model, 0.01)


@pytest.fixture(scope="session")
def road_db():
    profile = RoadProfile((
        RoadSegment(start=0.9, end=3.0, amplitude=2.58e-2, omega=2 * np.pi),
        RoadSegment(start=3.6, end=5.1, amplitude=1.23e-2, omega=1.2 * np.pi),
    ))
    return RoadDatabase(left=profile, right=profile, speed=15.0, wheelbase=3.0)


@pytest.fixture
def scenario_sim():
    return SimConfig(duration=6.0, ts=0.01, seed=2026, initial_state=SCENARIO_X0)


@pytest.fixture
def scenario_mhe():
    return MheConfig(
        horizon=10,
        q_diag=(0.25, 1, 0.25, 1, 0.25, 1, 0.25, 1, 0.3, 1, 0.5, 0.5, 0.5, 0.5),
        r_diag=(0.75, 0.75, 0.75, 0.75, 1, 1, 1),
    )
