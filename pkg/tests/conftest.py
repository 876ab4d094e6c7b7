import pytest

from vecoffload.domain import Criticality, OffloadRequest, ServerDescriptor, ServiceSpec, VehicleState
from vecoffload.geometry import PenaltyWeights


@pytest.fixture
def service():
    return ServiceSpec("object_recognition", Criticality.HIGH, max_rtt=590.0, local_rtt=550.0)


@pytest.fixture
def weights():
    return PenaltyWeights(0.625, 0.375, 100.0)


@pytest.fixture
def zero_weights():
    return PenaltyWeights(0.0, 0.0, 100.0)


def make_request(service, position=(0.0, 0.0), direction=(1.0, 0.0), speed=10.0, t=0):
    return OffloadRequest(VehicleState(position, direction, speed), service, t)


def server(sid, position, comm_range=1000.0, **kw):
    return ServerDescriptor(sid, position, comm_range, **kw)


_CRITERIA: list = []


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict that is echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
