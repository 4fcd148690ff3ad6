import pytest

from helpers import machine, plain, spawn
from intermittent.errors import LogicError
from intermittent.kernel import TaskStatus
from intermittent.memory import RegionKind
from intermittent.workloads import ScriptAction, Workload


def test_round_robin_dispatch():
    m = machine()
    k = m.kernel
    tasks = [spawn(m, n) for n in "ABC"]
    order = [k.schedule_next().id for _ in range(6)]
    ids = [t.id for t in tasks]
    assert order == ids + ids
    assert m.kernel.current is tasks[2]
    assert k.clock.ctx_switch_count == 6


def test_context_lives_in_vm_or_nvm():
    m = machine()
    t = spawn(m, "A")
    assert t.region is RegionKind.VM
    m.recovery.records[t.record_id].lengthy = True
    t2 = m.kernel.create_task(t.attrs, True, t.workload, t.record_id)
    assert t2.region is RegionKind.NVM
    assert m.memory.allocs[t2.stack_alloc].region is RegionKind.NVM


def test_power_failure_keeps_only_lengthy_contexts():
    m = machine()
    a = spawn(m, "A")
    b = m.kernel.create_task(a.attrs, True, a.workload, 99)
    m.kernel.schedule_next()
    m.on_power_failure()
    assert list(m.kernel.tasks) == [b.id]
    assert b.status is TaskStatus.SUSPENDED
    assert m.kernel.current is None and not m.kernel.ready


def test_action_points_and_op_stalls():
    w = Workload("s", 1000, 1000, 1e-6, 1e-6,
                 (ScriptAction(40, "read", 0), ScriptAction(100, "commit")))
    m = machine([w], n_objects=1)
    k = m.kernel
    t = spawn(m, "s")
    k.schedule_next()
    assert k.time_to_point(t) == 400
    with pytest.raises(LogicError):
        k.run_slice(t, 401)
    k.run_slice(t, 400)
    assert k.due_action(t) is None  # read cost starts stalling
    assert k.time_to_point(t) == 48
    k.run_slice(t, 48)
    assert k.due_action(t).op == "read"
    k.complete_action(t)
    assert t.done_us == 400 and k.time_to_point(t) == 600


def test_suspend_resume_rules():
    m = machine()
    t = spawn(m, "A")
    k = m.kernel
    k.suspend_task(t)
    assert t.id not in k.ready and t.status is TaskStatus.SUSPENDED
    k.resume_task(t)
    assert list(k.ready) == [t.id]
    k.delete_task(t)
    with pytest.raises(LogicError):
        k.suspend_task(t)
    with pytest.raises(LogicError):
        k.resume_task(t)
    assert not m.memory.is_live(t.stack_alloc)


def test_run_slice_requires_running_task():
    m = machine()
    t = spawn(m, "A")
    with pytest.raises(LogicError):
        m.kernel.run_slice(t, 1)


def test_lengthy_context_flag_tracks_switch_out():
    m = machine([plain("A"), plain("B")])
    k = m.kernel
    a = k.create_task(spawn(m, "A").attrs, True, plain("A"), 50)
    k.ready.remove(a.id)
    k.ready.appendleft(a.id)
    assert k.schedule_next() is a
    assert not a.context_valid  # running: NVM context is mid-update
    k.schedule_next()
    assert a.context_valid
