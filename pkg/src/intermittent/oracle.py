"""Independent checkers for recorded histories.

Both checkers work only from the append-only history a simulation emits
and from the workload scripts; neither consults validity intervals or
any other runtime bookkeeping, so they can catch bugs in it.

History records::

    ("read", instance, obj, version)
    ("commit", instance, record, workload, objs, begin, end, version)

``version`` is the op sequence number of the commit that produced the
value (0 for the initial contents).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

from .workloads import initial_value, task_output


@dataclass
class GraphReport:
    nodes: int = 0
    edges: int = 0
    cycle: list | None = None
    order_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.cycle is None and not self.order_violations


def _commits(history):
    return [h for h in history if h[0] == "commit"]


def precedence_graph(history) -> dict:
    """Conflict graph over committed instances: ``{node: set(predecessors)}``.

    Edges come straight from the definitions: a writer precedes every
    reader of its version (wr), writers of one object follow their commit
    order (ww), and a reader precedes whoever overwrote what it read (rw).
    """
    commits = _commits(history)
    committed = {h[1] for h in commits}
    writer_of = {}            # (obj, version) -> instance
    writers = defaultdict(list)  # obj -> [(version, instance)] in commit order
    for h in commits:
        _, inst, _rec, _name, objs, _b, _e, ver = h
        for o in objs:
            writer_of[(o, ver)] = inst
            writers[o].append((ver, inst))
    preds = {inst: set() for inst in committed}

    def edge(a, b):
        if a != b:
            preds[b].add(a)

    for o, seq in writers.items():
        for (_, a), (_, b) in zip(seq, seq[1:]):
            edge(a, b)
    for h in history:
        if h[0] != "read" or h[1] not in committed:
            continue
        _, reader, o, ver = h
        w = writer_of.get((o, ver))
        if w is not None:
            edge(w, reader)
        for v2, w2 in writers.get(o, ()):
            if v2 > ver:
                edge(reader, w2)
                break
    return preds


def check_serializable(history) -> GraphReport:
    """Acyclicity of the precedence graph, plus agreement with the claimed order.

    The claimed serial order sorts commits by (interval begin, commit
    version); every graph edge must point forward in it.
    """
    preds = precedence_graph(history)
    rep = GraphReport(nodes=len(preds), edges=sum(len(p) for p in preds.values()))
    try:
        tuple(TopologicalSorter(preds).static_order())
    except CycleError as exc:
        rep.cycle = list(exc.args[1])
        return rep
    pos = {h[1]: i for i, h in enumerate(serial_order(history))}
    for b, ps in preds.items():
        for a in ps:
            if pos[a] >= pos[b]:
                rep.order_violations.append((a, b))
    return rep


def serial_order(history) -> list:
    return sorted(_commits(history), key=lambda h: (h[5], h[7]))


def serial_execution(history, workloads, n_objects: int, object_size: int = 64,
                     initial=None) -> tuple:
    """Re-execute every committed task alone, in serial order; return the final image."""
    by_name = {w.name: w for w in workloads}
    state = list(initial) if initial is not None else [
        initial_value(i, object_size) for i in range(n_objects)]
    for h in serial_order(history):
        record, name = h[2], h[3]
        local, observed, writes = {}, [], 0
        for act in by_name[name].script:
            if act.op == "read":
                observed.append(local.get(act.obj, state[act.obj]))
            elif act.op == "write":
                local[act.obj] = task_output(record, act.obj, writes, observed, object_size)
                writes += 1
        if set(local) != set(h[4]):
            raise AssertionError(f"record {record}: replay wrote {sorted(local)}, "
                                 f"history says {sorted(h[4])}")
        for o, v in local.items():
            state[o] = v
    return tuple(state)


def duplicate_records(history) -> list:
    """Records that committed more than once (exactly-once violations)."""
    seen, dup = set(), []
    for h in _commits(history):
        if h[2] in seen:
            dup.append(h[2])
        seen.add(h[2])
    return dup
