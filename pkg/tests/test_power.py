import math

import pytest
from hypothesis import given, strategies as st

from intermittent.errors import ConfigError
from intermittent.power import (BUILTIN_TRACES, PowerState, PowerTrace, builtin_trace,
                                capacitor_energy, load_trace, low_voltage_threshold, round_up)


def test_capacitor_energy_half_c_v_squared():
    assert capacitor_energy(200e-6, 2.8) == pytest.approx(784e-6)
    assert capacitor_energy(200e-6, 2.4) == pytest.approx(576e-6)
    with pytest.raises(ValueError):
        capacitor_energy(0, 1)


def test_threshold_funds_one_context_switch():
    c, v_op, p, t = 200e-6, 2.4, 5.25e-3, 1e-3
    v = low_voltage_threshold(p, t, c, v_op)
    # remaining energy above V_op equals P * T_cs = 5.25 uJ
    assert capacitor_energy(c, v) - capacitor_energy(c, v_op) == pytest.approx(5.25e-6)
    assert v == pytest.approx(2.4109, abs=1e-4)
    assert round_up(v, 0.01) == 2.42


def test_round_up_is_exact_on_grid_points():
    assert round_up(2.42, 0.01) == 2.42
    assert round_up(2.4201, 0.01) == 2.43


def test_builtin_traces_match_the_setup():
    assert builtin_trace("strong").segments == [(100_000_000, 3e-3)]
    assert builtin_trace("weak").segments == [(100_000_000, 1.5e-3)]
    assert set(BUILTIN_TRACES) == {"strong", "weak", "stable"}
    with pytest.raises(ConfigError):
        builtin_trace("moonlight")


def test_trace_text_round_trip(tmp_path):
    tr = PowerTrace([(1500, 2e-3), (250_000, 0.0), (3000, 4.5e-3)])
    back = PowerTrace.parse(tr.dumps())
    assert back.segments == tr.segments and back.total_us == 254_500
    f = tmp_path / "t.txt"
    f.write_text(tr.dumps())
    assert load_trace(str(f)).segments == tr.segments
    assert tr.segment_at(1499) == (2e-3, 1500)
    assert tr.segment_at(1500) == (0.0, 251_500)
    assert tr.segment_at(10**9) == (0.0, None)


@pytest.mark.parametrize("text", ["1", "a b", "-5 3", "5 -3", ""])
def test_bad_trace_text(text):
    with pytest.raises(ConfigError):
        PowerTrace.parse(text)


def test_load_trace_missing_file():
    with pytest.raises(ConfigError):
        load_trace("/nonexistent/trace.txt")


def _state(watts=3e-3, **kw):
    return PowerState(PowerTrace.constant(watts, 10), **kw)


def test_cold_start_charges_to_v_on():
    ps = _state()
    # 784 uJ at 3 mW
    expected = math.ceil(784e-6 / 3e-3 * 1e6)
    assert ps.time_to_event(0.0) == expected
    assert ps.step_power(expected - 1, 0.0) == []
    assert ps.step_power(1, 0.0) == ["power_on"]
    assert ps.device_on


def test_hysteresis_and_low_voltage_order():
    ps = _state(watts=1e-3, v_init=2.8)
    ps.step_power(0, 0.0)
    assert ps.device_on
    draw = 4e-3
    t_lv = ps.time_to_event(draw)
    # (E_on - E_th) / 3 mW net
    assert t_lv == math.ceil((ps.e_on - ps.e_th) / 3e-3 * 1e6)
    assert ps.step_power(t_lv, draw) == ["low_voltage"]
    t_off = ps.time_to_event(draw)
    assert ps.step_power(t_off, draw) == ["power_off"]
    assert not ps.device_on
    assert ps.v_now == pytest.approx(2.4, abs=1e-3)


def test_no_crossing_when_harvest_covers_draw():
    ps = _state(watts=20e-3, v_init=3.0)
    ps.step_power(0, 0.0)
    assert ps.time_to_event(5e-3) is None
    ps.step_power(1_000_000, 5e-3)
    assert ps.v_now == pytest.approx(3.3)  # clamped at v_max


@given(st.floats(0.5e-3, 10e-3), st.floats(0, 10e-3), st.integers(1, 20_000))
def test_energy_balance_without_clamping(h, d, dt):
    ps = _state(watts=h, v_init=3.0)
    ps.step_power(0, 0.0)
    e0 = ps.energy
    ps.step_power(dt, d)
    want = min(max(e0 + (h - d) * dt * 1e-6, 0.0), ps.e_max)
    assert ps.energy == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_invalid_power_configuration():
    with pytest.raises(ConfigError):
        _state(v_on=2.3)
    with pytest.raises(ConfigError):
        _state(capacitance_f=0)
    with pytest.raises(ConfigError):
        _state(v_th=2.9)
    ps = _state()
    with pytest.raises(ValueError):
        ps.step_power(10, 1e-3)  # off devices draw nothing
