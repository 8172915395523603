import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tariffdesign.thermal import ROOM_1, ROOM_2, ConsumerType

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def room_consumer(n=4, room=ROOM_1, w=30.0, q=6.78, b=0.5, gamma=0.1, T_d=24.0, u_max=3.0, flexible=False):
    return ConsumerType.make(room, np.full(n, w), np.full(n, q), np.full(n, b), gamma, T_d, u_max, flexible)


def tracking_consumer(n=5, room=ROOM_1, T_d=24.0):
    """Drive chosen so u = 0 keeps T exactly at T_d."""
    q = (1.0 - room.k_r) * T_d - room.k_w * 30.0
    return ConsumerType.make(room, np.full(n, 30.0), np.full(n, q), np.full(n, 0.3), 0.5, T_d, 3.0)


@pytest.fixture
def room1():
    return room_consumer()


@pytest.fixture
def rooms():
    return ROOM_1, ROOM_2


# acceptance lines, printed once at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
