"""Energy-harvesting power model: capacitor, on/off hysteresis, low-voltage interrupt."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

TRACE_SECONDS = 100


def capacitor_energy(c: float, v: float) -> float:
    """Energy in joules stored in capacitance ``c`` charged to ``v`` volts."""
    if c <= 0:
        raise ValueError("capacitance must be positive")
    if v < 0:
        raise ValueError("voltage must be non-negative")
    return 0.5 * c * v * v


def low_voltage_threshold(p_max: float, t_cs: float, c: float, v_op: float) -> float:
    """Lowest interrupt voltage that still funds one context-switch period.

    Solves ½C(V² − V_op²) = P·T_cs for V.
    """
    if p_max < 0 or t_cs <= 0 or c <= 0 or v_op <= 0:
        raise ValueError("p_max >= 0 and t_cs, c, v_op > 0 required")
    return math.sqrt(2.0 * p_max * t_cs / c + v_op * v_op)


def round_up(value: float, granularity: float) -> float:
    steps = math.ceil(value / granularity - 1e-9)
    return round(steps * granularity, 12)


@dataclass
class PowerTrace:
    """Piecewise-constant harvest power, ``segments`` of (duration_us, watts)."""

    segments: list
    name: str = "custom"
    _ends: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("power trace has no segments")
        ends, t = [], 0
        for dur, watts in self.segments:
            if dur <= 0:
                raise ConfigError("trace segment duration must be positive")
            if watts < 0:
                raise ConfigError("harvest power must be non-negative")
            t += int(dur)
            ends.append(t)
        self._ends = ends

    def __deepcopy__(self, memo):
        return self

    @property
    def total_us(self) -> int:
        return self._ends[-1]

    def segment_at(self, t_us: int) -> tuple[float, int]:
        """Harvest power at ``t_us`` and the time the segment ends (None past the end)."""
        i = bisect.bisect_right(self._ends, t_us)
        if i >= len(self.segments):
            return 0.0, None
        return self.segments[i][1], self._ends[i]

    @classmethod
    def constant(cls, watts: float, seconds: float = TRACE_SECONDS, name: str = "custom"):
        return cls([(int(seconds * 1_000_000), watts)], name=name)

    @classmethod
    def parse(cls, text: str, name: str = "custom"):
        segs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"trace line {lineno}: expected 'duration_ms harvest_mw'")
            try:
                dur_ms, mw = float(parts[0]), float(parts[1])
            except ValueError:
                raise ConfigError(f"trace line {lineno}: non-numeric field") from None
            segs.append((int(round(dur_ms * 1000)), mw / 1e3))
        return cls(segs, name=name)

    def dumps(self) -> str:
        return "".join(f"{d / 1000:g} {w * 1e3:g}\n" for d, w in self.segments)


BUILTIN_TRACES = {
    "strong": ("3 mW constant for 100 s", 3.0e-3),
    "weak": ("1.5 mW constant for 100 s", 1.5e-3),
    "stable": ("20 mW constant for 100 s; never browns out", 20.0e-3),
}


def builtin_trace(name: str) -> PowerTrace:
    try:
        _, watts = BUILTIN_TRACES[name]
    except KeyError:
        raise ConfigError(f"unknown trace {name!r}") from None
    return PowerTrace.constant(watts, name=name)


def load_trace(spec: str) -> PowerTrace:
    if spec in BUILTIN_TRACES:
        return builtin_trace(spec)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"trace {spec!r} is neither built in nor an existing file")
    return PowerTrace.parse(path.read_text(), name=path.stem)


class PowerState:
    """Capacitor state plus the hysteresis switch and low-voltage latch.

    Time integration is closed-form per constant-power piece, so the
    only rounding is the ceiling applied to predicted crossing times.
    """

    def __init__(self, trace: PowerTrace, capacitance_f=200e-6, v_on=2.8, v_off=2.4,
                 v_op=None, v_th=None, v_max=3.3, v_init=0.0, efficiency=1.0,
                 p_max=5.25e-3, t_cs_s=1e-3, threshold_step=0.01):
        if capacitance_f <= 0:
            raise ConfigError("capacitance must be positive")
        if not 0 < v_off < v_on <= v_max:
            raise ConfigError("need 0 < v_off < v_on <= v_max")
        if not 0 < efficiency <= 1:
            raise ConfigError("efficiency must be in (0, 1]")
        self.trace = trace
        self.capacitance_f = capacitance_f
        self.v_on, self.v_off, self.v_max = v_on, v_off, v_max
        self.v_op = v_off if v_op is None else v_op
        if v_th is None:
            v_th = round_up(low_voltage_threshold(p_max, t_cs_s, capacitance_f, self.v_op),
                            threshold_step)
        if not v_off <= v_th < v_on:
            raise ConfigError(f"low-voltage threshold {v_th} V outside [v_off, v_on)")
        self.v_th = v_th
        self.efficiency = efficiency
        self.e_on = capacitor_energy(capacitance_f, v_on)
        self.e_off = capacitor_energy(capacitance_f, v_off)
        self.e_th = capacitor_energy(capacitance_f, v_th)
        self.e_max = capacitor_energy(capacitance_f, v_max)
        self.energy = capacitor_energy(capacitance_f, min(v_init, v_max))
        self.device_on = False
        self.lv_flag = False
        self.t_us = 0

    def __deepcopy__(self, memo):
        return self

    @property
    def v_now(self) -> float:
        return math.sqrt(2.0 * self.energy / self.capacitance_f)

    def harvest(self) -> tuple[float, int]:
        watts, end = self.trace.segment_at(self.t_us)
        return watts * self.efficiency, end

    def time_to_event(self, draw_w: float):
        """Microseconds until the next threshold crossing at constant draw.

        Returns None when no crossing happens within the current trace
        segment's power level. Callers also bound steps by
        :meth:`segment_remaining`.
        """
        h, _ = self.harvest()
        net = h - (draw_w if self.device_on else 0.0)
        e = self.energy
        if not self.device_on:
            if e >= self.e_on:
                return 0
            if net <= 0:
                return None
            return max(0, math.ceil((self.e_on - e) / net * 1e6))
        target = self.e_th if (not self.lv_flag and e > self.e_th) else self.e_off
        if e <= target:
            return 0
        if net >= 0:
            return None
        return max(0, math.ceil((e - target) / -net * 1e6))

    def segment_remaining(self):
        _, end = self.harvest()
        return None if end is None else end - self.t_us

    def step_power(self, dt_us: int, device_draw_w: float) -> list[str]:
        """Integrate ``dt_us`` of harvest minus draw and report crossings."""
        if dt_us < 0:
            raise ValueError("dt_us must be non-negative")
        if device_draw_w < 0:
            raise ValueError("draw must be non-negative")
        if not self.device_on and device_draw_w > 0:
            raise ValueError("device is off; draw must be zero")
        left = dt_us
        while left > 0:
            h, end = self.harvest()
            piece = left if end is None else min(left, end - self.t_us)
            e = self.energy + (h - device_draw_w) * piece * 1e-6
            self.energy = min(max(e, 0.0), self.e_max)
            self.t_us += piece
            left -= piece
        return self._crossings()

    def _crossings(self) -> list[str]:
        events = []
        if self.device_on:
            if not self.lv_flag and self.energy <= self.e_th:
                self.lv_flag = True
                events.append("low_voltage")
            if self.energy <= self.e_off:
                self.device_on = False
                events.append("power_off")
        elif self.energy >= self.e_on:
            self.device_on = True
            self.lv_flag = False
            events.append("power_on")
        return events

    def force_off(self) -> None:
        """Drop the device immediately (injected crash); stored energy is kept."""
        self.device_on = False
