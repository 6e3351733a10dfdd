"""Edge gateway: acquisition through the converter model, local display,
store-and-forward publishing, and energy-accounted sensor power control.

The gateway never sees ground truth directly: every continuous value it
reports went engineering unit -> volts -> 12-bit code -> volts -> unit, so
published numbers carry at most half an LSB of conversion error. Rain is a
digital line and passes through exactly.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Mapping

from . import adc
from .analytics import AlertRuleSet, PowerSchedule, always_on
from .client import RateLimited, ServiceUnavailable
from .envsim import EnvSample

SENSORS = ("temperature", "pressure", "moisture", "rain")
ANALOG_SENSORS = ("temperature", "pressure", "moisture")

# field index convention shared with the channel service and CLI
FIELD_MAP = {"temperature": 1, "pressure": 2, "moisture": 3, "rain": 4}

DEFAULT_EPOCH = datetime(2024, 12, 15, 10, 0, 0, tzinfo=timezone.utc)


class EmptyReadingError(RuntimeError):
    """Every sensor was powered off for this cycle."""


@dataclass(frozen=True)
class Reading:
    timestamp: datetime
    temperature: float | None = None
    pressure: float | None = None
    moisture: float | None = None
    rain: int | None = None

    def present(self) -> dict[str, float | int]:
        return {name: getattr(self, name) for name in SENSORS
                if getattr(self, name) is not None}


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    backoff_base_s: float = 1.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class GatewayConfig:
    sample_interval_s: float = 10.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    backlog_capacity: int = 1000
    power_mw: Mapping[str, float] = field(
        default_factory=lambda: {name: 5.0 for name in SENSORS})
    vref: float = adc.VREF_DEFAULT

    def __post_init__(self):
        if self.sample_interval_s <= 0:
            raise ValueError("sample interval must be positive")


class EnergyLedger:
    """Accumulated per-sensor on-time and the energy it implies."""

    def __init__(self, power_mw: Mapping[str, float]):
        self.power_mw = dict(power_mw)
        self.on_time_s: dict[str, float] = {name: 0.0 for name in self.power_mw}

    def add_on_time(self, sensor: str, seconds: float) -> None:
        self.on_time_s[sensor] += seconds

    def energy_mj(self, sensor: str) -> float:
        return self.on_time_s[sensor] * self.power_mw[sensor]

    def total_energy_mj(self) -> float:
        return sum(self.energy_mj(name) for name in self.on_time_s)


class EdgeGateway:
    """Acquisition side of the gateway.

    Times are seconds on the simulation timeline; reading timestamps are
    epoch + t. The active power schedule can be swapped at any cycle
    boundary; ledger and schedule accesses are mutex-guarded so an external
    controller thread may do so while the acquisition loop runs.
    """

    def __init__(self, config: GatewayConfig | None = None,
                 transfer_maps: Mapping[str, adc.TransferFunction] = adc.DEFAULT_MAPS,
                 schedule: PowerSchedule | None = None,
                 epoch: datetime = DEFAULT_EPOCH):
        self.config = config or GatewayConfig()
        self.transfer_maps = dict(transfer_maps)
        self.epoch = epoch
        self.ledger = EnergyLedger(self.config.power_mw)
        self._schedule = schedule if schedule is not None else always_on()
        self._lock = threading.Lock()
        self._last_t: float | None = None

    def apply_schedule(self, schedule: PowerSchedule) -> None:
        with self._lock:
            self._schedule = schedule

    @property
    def schedule(self) -> PowerSchedule:
        with self._lock:
            return self._schedule

    def acquire_cycle(self, t: float, env: EnvSample) -> Reading:
        """Read all powered-on sensors through the converter chain.

        Raises EmptyReadingError when the schedule has every sensor off for
        this cycle (the ledger then advances by zero).
        """
        with self._lock:
            schedule = self._schedule
            if self._last_t is not None and t < self._last_t:
                raise ValueError(f"time went backwards: {t} < {self._last_t}")
            self._last_t = t

            powered = [name for name in SENSORS if schedule.is_on(name, t)]
            for name in powered:
                self.ledger.add_on_time(name, self.config.sample_interval_s)

        if not powered:
            raise EmptyReadingError(f"all sensors off at t={t}")

        values: dict[str, float | int | None] = {name: None for name in SENSORS}
        for name in ANALOG_SENSORS:
            if name in powered:
                values[name] = adc.convert_units(getattr(env, name),
                                                 self.transfer_maps[name])
        if "rain" in powered:
            values["rain"] = env.rain

        return Reading(
            timestamp=self.epoch + timedelta(seconds=t),
            temperature=values["temperature"],
            pressure=values["pressure"],
            moisture=values["moisture"],
            rain=values["rain"],
        )


# ---------------------------------------------------------------------------
# Local display and indicators


@dataclass(frozen=True)
class LcdFrame:
    line1: str
    line2: str

    def __post_init__(self):
        for line in (self.line1, self.line2):
            if len(line) != 16:
                raise ValueError(f"LCD line must be 16 chars, got {len(line)}")
            if not all(c.isprintable() for c in line):
                raise ValueError("LCD line contains unprintable characters")


def render_lcd(reading: Reading) -> LcdFrame:
    """16x2 frame: `T:xx.xC P:xxxx.x` / `M:xx.x% R:{0|1|-}`, `--` when absent.

    Cell widths are fixed (7+1+8 and 7+1+3 padded), so frames are always
    exactly 16 characters per line; oversized values are clipped.
    """
    temp = "T:--" if reading.temperature is None else f"T:{reading.temperature:.1f}C"
    press = "P:--" if reading.pressure is None else f"P:{reading.pressure:.1f}"
    moist = "M:--" if reading.moisture is None else f"M:{reading.moisture:.1f}%"
    rain = "R:-" if reading.rain is None else f"R:{reading.rain}"
    line1 = f"{temp[:7]:<7} {press[:8]:<8}"
    line2 = f"{moist[:7]:<7} {rain[:3]:<3}".ljust(16)
    return LcdFrame(line1, line2)


def indicator_states(reading: Reading, rules: AlertRuleSet) -> dict[str, bool]:
    """LED panel: heat and dry thresholds come from the alert rules."""
    heat_threshold = 35.0
    moisture_floor = 20.0
    for rule in rules:
        if rule.parameter == "temperature" and rule.comparator == ">":
            heat_threshold = rule.threshold
        elif rule.parameter == "moisture" and rule.comparator == "<":
            moisture_floor = rule.threshold
    return {
        "heat": reading.temperature is not None and reading.temperature > heat_threshold,
        "rain": reading.rain == 1,
        "dry": reading.moisture is not None and reading.moisture < moisture_floor,
    }


# ---------------------------------------------------------------------------
# Publishing with store-and-forward


def reading_to_fields(reading: Reading) -> dict[int, str]:
    """Map a reading onto the channel field convention as decimal strings."""
    fields: dict[int, str] = {}
    for name, value in reading.present().items():
        index = FIELD_MAP[name]
        fields[index] = str(value) if name == "rain" else f"{value:.2f}"
    return fields


@dataclass(frozen=True)
class PublishResult:
    status: str                 # "acknowledged" or "queued"
    entry_id: int | None = None
    flushed: int = 0            # backlog entries delivered by this call


class Publisher:
    """Sends readings in acquisition order, buffering across outages.

    Each reading is attempted with exponential backoff; when attempts are
    exhausted it joins a bounded FIFO backlog that is drained, oldest first,
    before anything newer is sent. A full backlog evicts its oldest entry
    and counts the eviction in `drops`.
    """

    def __init__(self, client, retry: RetryPolicy | None = None,
                 backlog_capacity: int = 1000,
                 sleep: Callable[[float], None] = time.sleep):
        self.client = client
        self.retry = retry or RetryPolicy()
        self.backlog_capacity = backlog_capacity
        self.sleep = sleep
        self.backlog: deque[Reading] = deque()
        self.drops = 0
        self._lock = threading.Lock()

    def pending(self) -> int:
        with self._lock:
            return len(self.backlog)

    def _send_once(self, reading: Reading) -> int:
        created_at = reading.timestamp.replace(microsecond=0)
        return self.client.update(reading_to_fields(reading), created_at=created_at)

    def _send_with_retry(self, reading: Reading) -> int | None:
        backoff = self.retry.backoff_base_s
        for attempt in range(self.retry.max_attempts):
            try:
                return self._send_once(reading)
            except (ServiceUnavailable, RateLimited):
                if attempt + 1 < self.retry.max_attempts:
                    self.sleep(backoff)
                    backoff *= 2
        return None

    def _enqueue(self, reading: Reading) -> None:
        if self.backlog_capacity <= 0:
            self.drops += 1
            return
        if len(self.backlog) >= self.backlog_capacity:
            self.backlog.popleft()
            self.drops += 1
        self.backlog.append(reading)

    def publish(self, reading: Reading) -> PublishResult:
        with self._lock:
            flushed = 0
            while self.backlog:
                entry_id = self._send_with_retry(self.backlog[0])
                if entry_id is None:
                    self._enqueue(reading)
                    return PublishResult("queued", flushed=flushed)
                self.backlog.popleft()
                flushed += 1
            entry_id = self._send_with_retry(reading)
            if entry_id is None:
                self._enqueue(reading)
                return PublishResult("queued", flushed=flushed)
            return PublishResult("acknowledged", entry_id=entry_id, flushed=flushed)
