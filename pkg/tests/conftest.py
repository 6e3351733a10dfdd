from __future__ import annotations

from datetime import datetime, timezone

import pytest

from agristack.httpd import ChannelHttpServer
from agristack.service import ChannelService

FIELD_LABELS = ["Temperature", "Pressure", "Moisture", "Rain"]
WRITE_KEY = "TESTWRITEKEY0001"


class FakeClock:
    """Manually advanced service clock."""

    def __init__(self, start: datetime | None = None):
        self.now = start or datetime(2024, 12, 15, 10, 0, 0, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def advance(self, seconds: float) -> None:
        from datetime import timedelta
        self.now += timedelta(seconds=seconds)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def memory_service(clock):
    service = ChannelService(clock=clock)
    service.create_channel("field-station", FIELD_LABELS,
                           write_key=WRITE_KEY, rate_limit_s=0.0)
    return service


@pytest.fixture
def http_server(memory_service):
    server = ChannelHttpServer(memory_service).start()
    yield server
    server.stop()
