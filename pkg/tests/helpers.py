"""Shared scaffolding for the test suite: randomized runs and crash sweeps."""

from __future__ import annotations

import random
from dataclasses import dataclass

from intermittent.baselines import CheckpointConfig, Scheme
from intermittent.engine import MachineConfig, PowerParams, Simulator
from intermittent.power import PowerTrace
from intermittent.simcore import CRASH_SITES, CrashPoint
from intermittent.workloads import ScriptAction, Workload, random_workloads

OURS_SITES = sorted(s for s in CRASH_SITES if not s.startswith(("sys_", "log_")))
SYS_SITES = sorted(s for s in CRASH_SITES if not s.startswith("log_"))
LOG_SITES = sorted(s for s in CRASH_SITES if not s.startswith("sys_"))
COMMIT_SITES = ("shadow_write", "addr_map_write", "bitmap_toggle", "temp_update")


@dataclass
class Case:
    sim: Simulator
    workloads: list
    n_objects: int
    crashes: list


def random_case(seed: int, scheme=Scheme.OURS, duration_us: int = 200_000, crash: bool = True,
                machine: MachineConfig | None = None, period_ms: int = 20) -> Case:
    """Small capacitor, 2-6 random tasks over 1-5 objects, random crash points."""
    rng = random.Random(seed)
    workloads, n = random_workloads(rng)
    scheme = Scheme.parse(scheme)
    sites = {Scheme.SYS: SYS_SITES, Scheme.LOG: LOG_SITES}.get(scheme, OURS_SITES)
    crashes = []
    if crash:
        crashes = [CrashPoint(rng.choice(sites), rng.randint(1, 30))
                   for _ in range(rng.randint(0, 4))]
    ck = CheckpointConfig(scheme, period_ms) if scheme in (Scheme.SYS, Scheme.LOG) else None
    sim = Simulator(workloads, PowerTrace.constant(rng.uniform(2e-3, 6e-3), 1), scheme=scheme,
                    checkpoint=ck, duration_us=duration_us,
                    power=PowerParams(capacitance_f=20e-6), n_objects=n,
                    crash_schedule=crashes, machine=machine, record_events=False)
    return Case(sim.run(), workloads, n, crashes)


def four_object_writer(repeat: bool = False) -> Workload:
    acts = tuple(ScriptAction(50, "write", o) for o in range(4)) + (ScriptAction(100, "commit"),)
    return Workload("W4", 4_000, 4_200, 12e-6, 13e-6, acts, repeat=repeat)


def run_until_recovered(sim: Simulator, limit_us: int) -> bool:
    """Step until an injected crash has fired and recovery has completed."""
    while sim.clock.now_us < limit_us:
        sim.step(limit=limit_us)
        if sim.crashes and sim.phase == "run":
            return True
    return False


def machine(workloads=None, n_objects=3, lengthy_detection=True, **cfg):
    """A bare device (no simulator loop) for driving the runtime by hand."""
    from intermittent.engine import CostModel, History, Machine
    from intermittent.simcore import CrashInjector, SimClock

    workloads = workloads or [plain(name) for name in "ABC"]
    return Machine(workloads, n_objects, SimClock(), CrashInjector(), History(),
                   MachineConfig(**cfg), CostModel(), lengthy_detection)


def plain(name, time_us=2_000, repeat=False, obj=0):
    acts = (ScriptAction(50, "write", obj), ScriptAction(100, "commit"))
    return Workload(name, time_us, time_us, time_us * 3e-9, time_us * 3e-9, acts, repeat=repeat)


def spawn(m, name):
    rec = next(r for r in m.recovery.records.values()
               if r.workload.name == name and not r.instantiated)
    return m.recovery.spawn(rec)
