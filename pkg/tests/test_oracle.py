import pytest

from intermittent import oracle
from intermittent.workloads import ScriptAction, Workload, initial_value, task_output


def commit(inst, rec, objs, begin, ver, name="T"):
    return ("commit", inst, rec, name, tuple(objs), begin, begin + 1, ver)


def test_serial_history_is_acyclic():
    h = [("read", 1, 0, 0), commit(1, 1, [0], 1, 5),
         ("read", 2, 0, 5), commit(2, 2, [0], 2, 9)]
    rep = oracle.check_serializable(h)
    assert rep.ok and rep.nodes == 2 and rep.edges == 1


def test_write_skew_cycle_detected():
    h = [("read", 1, 0, 0), ("read", 2, 1, 0),
         commit(1, 1, [1], 1, 5), commit(2, 2, [0], 1, 6)]
    rep = oracle.check_serializable(h)
    assert rep.cycle is not None and set(rep.cycle) >= {1, 2}


def test_claimed_order_must_follow_edges():
    # 2 read 1's output but claims an earlier serialization point
    h = [commit(1, 1, [0], 5, 5), ("read", 2, 0, 5), commit(2, 2, [1], 3, 8)]
    rep = oracle.check_serializable(h)
    assert rep.cycle is None and rep.order_violations == [(1, 2)]


def test_reads_of_uncommitted_instances_are_ignored():
    h = [("read", 7, 0, 0), commit(1, 1, [0], 1, 3), ("read", 8, 0, 0)]
    assert oracle.check_serializable(h).ok
    assert oracle.precedence_graph(h) == {1: set()}


def test_rw_edge_points_to_next_overwriter_only():
    h = [("read", 3, 0, 0), commit(1, 1, [0], 1, 4), commit(2, 2, [0], 2, 6),
         commit(3, 3, [1], 0, 7)]
    g = oracle.precedence_graph(h)
    assert g[1] == {3} and g[2] == {1}


def _rw_task(name):
    return Workload(name, 10, 10, 1e-9, 1e-9,
                    (ScriptAction(0, "read", 0), ScriptAction(50, "write", 0),
                     ScriptAction(60, "write", 1), ScriptAction(100, "commit")))


def test_serial_execution_replays_in_interval_order():
    ws = [_rw_task("T")]
    h = [commit(10, 2, [0, 1], 4, 8), commit(11, 1, [0, 1], 2, 5)]
    got = oracle.serial_execution(h, ws, 2, object_size=16)
    first0 = task_output(1, 0, 0, [initial_value(0, 16)], 16)
    second0 = task_output(2, 0, 0, [first0], 16)
    second1 = task_output(2, 1, 1, [first0], 16)
    assert got == (second0, second1)


def test_serial_execution_checks_write_sets():
    with pytest.raises(AssertionError):
        oracle.serial_execution([commit(1, 1, [0], 1, 2)], [_rw_task("T")], 2)


def test_duplicates():
    h = [commit(1, 1, [0], 1, 2), commit(2, 1, [0], 2, 3), commit(3, 4, [0], 3, 4)]
    assert oracle.duplicate_records(h) == [1]
