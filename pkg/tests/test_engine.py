import pytest

from helpers import plain, random_case
from intermittent.baselines import CheckpointConfig, Scheme
from intermittent.engine import CostModel, MachineConfig, PowerParams, Simulator
from intermittent.errors import ConfigError
from intermittent.power import PowerTrace, builtin_trace
from intermittent.simcore import CrashPoint
from intermittent.workloads import builtin_workloads


def test_zero_duration_does_nothing():
    sim = Simulator(builtin_workloads(), builtin_trace("strong"), duration_us=0).run()
    assert sim.clock.now_us == 0 and sim.events == [] and sim.power_cycles == 0


def test_stable_power_never_fails_and_everything_progresses():
    sim = Simulator(builtin_workloads(), builtin_trace("stable"), duration_us=3_000_000).run()
    by = sim.machine.stats.by_workload
    assert sim.power_cycles == 0 and sim.aborts["power"] == 0
    assert by["FloatMath"] > 100 and by["MatMul"] >= 1
    assert sum(by.values()) == sim.machine.stats.finished == len(sim.finished_records())


def test_boot_waits_for_v_on():
    sim = Simulator([plain("A")], builtin_trace("strong"), duration_us=400_000)
    sim.run_until(261_000)
    assert not sim.power.device_on
    sim.run_until(262_000)
    assert sim.power.device_on
    kinds = [e["ev"] for e in sim.events]
    assert kinds[:2] == ["power_on", "recovered"]


def test_power_failures_on_weak_trace_abort_and_recover():
    sim = Simulator(builtin_workloads(), builtin_trace("weak"), duration_us=5_000_000).run()
    assert sim.power_cycles > 5
    assert sim.aborts["power"] > 0
    assert len(sim.recoveries) == sim.power_cycles or len(sim.recoveries) == sim.power_cycles - 1
    assert all(r >= 0 for r in sim.recentness)


def test_naive_rerun_never_marks_lengthy():
    sim = Simulator(builtin_workloads(), builtin_trace("weak"), scheme="naive",
                    duration_us=5_000_000).run()
    assert not any(t.lengthy for t in sim.machine.kernel.tasks.values())
    assert sim.machine.stats.finished_lengthy_mode == 0


def test_ours_accumulates_lengthy_progress():
    sim = Simulator(builtin_workloads(), builtin_trace("weak"), duration_us=20_000_000).run()
    assert sim.machine.stats.finished_lengthy_mode >= 1


def test_crash_is_logged_and_recovered():
    sim = Simulator(builtin_workloads(), builtin_trace("stable"), duration_us=500_000,
                    crash_schedule=[CrashPoint("ctx_switch", 5)]).run()
    assert sim.crashes == 1
    crash = next(e for e in sim.events if e["ev"] == "crash")
    assert crash["site"] == "ctx_switch" and crash["occurrence"] == 5
    assert sum(e["ev"] == "recovered" for e in sim.events) == 2


def test_digest_is_deterministic_and_sensitive():
    a = random_case(3).sim.digest
    assert a == random_case(3).sim.digest
    assert a != random_case(4).sim.digest


def test_checkpoint_grid():
    sim = Simulator([plain("A", repeat=True)], builtin_trace("stable"), scheme="SYS",
                    checkpoint=CheckpointConfig("SYS", 20), duration_us=200_000).run()
    starts = [e["t"] - e["cost_us"] for e in sim.events if e["ev"] == "checkpoint"]
    gaps = {b - a for a, b in zip(starts, starts[1:])}
    assert gaps == {20_000}


@pytest.mark.parametrize("kw", [
    {"workloads": []},
    {"tick_us": 0},
    {"n_objects": 0},
    {"scheme": "SYS", "checkpoint": CheckpointConfig("LOG")},
    {"duration_us": -1},
])
def test_bad_simulator_configuration(kw):
    args = {"workloads": builtin_workloads(), "trace": builtin_trace("strong")}
    args.update(kw)
    if kw.get("n_objects") == 0:
        args["n_objects"] = 2  # builtin scripts reference objects 0..4
    with pytest.raises(ConfigError):
        Simulator(args.pop("workloads"), args.pop("trace"), **args)


def test_cost_model_validation():
    with pytest.raises(ConfigError):
        CostModel(read_us=-1)
    with pytest.raises(ConfigError):
        CostModel(busy_w=-1)


def test_vm_capacity_is_enforced_through_the_engine():
    from intermittent.errors import OutOfMemory
    with pytest.raises(OutOfMemory):
        Simulator(builtin_workloads(), builtin_trace("stable"), duration_us=400_000,
                  machine=MachineConfig(vm_bytes=512)).run()


def test_small_capacitor_browns_out_often():
    sim = Simulator(builtin_workloads(), PowerTrace.constant(3e-3, 1), scheme="naive",
                    power=PowerParams(capacitance_f=20e-6), duration_us=1_000_000).run()
    assert sim.power_cycles > 20
