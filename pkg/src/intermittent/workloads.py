"""Benchmark task models: measured durations/energies plus data-access scripts."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

OPS = ("read", "write", "commit")
LONG_RUNNING_US = 10_000


@dataclass(frozen=True)
class ScriptAction:
    at: float
    op: str
    obj: int | None = None

    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class Workload:
    name: str
    vm_time_us: int
    nvm_time_us: int
    vm_energy_j: float
    nvm_energy_j: float
    script: tuple
    repeat: bool = True
    stack_size: int = 256
    long_running: bool | None = None

    def __post_init__(self):
        if self.vm_time_us <= 0 or self.nvm_time_us <= 0:
            raise ConfigError(f"{self.name}: durations must be positive")
        if self.nvm_time_us < self.vm_time_us or self.nvm_energy_j < self.vm_energy_j:
            raise ConfigError(f"{self.name}: NVM cost must not be below VM cost")
        if not self.script or self.script[-1].op != "commit":
            raise ConfigError(f"{self.name}: script must end with commit")
        last = 0.0
        for a in self.script:
            if a.op not in OPS:
                raise ConfigError(f"{self.name}: unknown op {a.op!r}")
            if not 0 <= a.at <= 100 or a.at < last:
                raise ConfigError(f"{self.name}: action percents must be ordered within 0..100")
            last = a.at
        if self.long_running is None:
            object.__setattr__(self, "long_running", self.vm_time_us > LONG_RUNNING_US)

    def __deepcopy__(self, memo):
        return self

    def time_us(self, nvm: bool) -> int:
        return self.nvm_time_us if nvm else self.vm_time_us

    def power_w(self, nvm: bool) -> float:
        if nvm:
            return self.nvm_energy_j / (self.nvm_time_us * 1e-6)
        return self.vm_energy_j / (self.vm_time_us * 1e-6)

    def thresholds(self, nvm: bool) -> tuple:
        """Work-done microsecond at which each script action becomes due."""
        total = self.time_us(nvm)
        return tuple(-(-round(a.at * 1000) * total // 100_000) for a in self.script)

    @property
    def read_set(self) -> frozenset:
        return frozenset(a.obj for a in self.script if a.op == "read")

    @property
    def write_set(self) -> frozenset:
        return frozenset(a.obj for a in self.script if a.op == "write")

    @property
    def objects(self) -> frozenset:
        return self.read_set | self.write_set


def _script(reads=(), writes=(), read_at=5, write_at=95):
    acts = [ScriptAction(read_at, "read", o) for o in reads]
    acts += [ScriptAction(write_at, "write", o) for o in writes]
    acts.sort(key=lambda a: a.at)
    acts.append(ScriptAction(100, "commit"))
    return tuple(acts)


def builtin_workloads() -> list[Workload]:
    """The five benchmark tasks with their measured VM/NVM time and energy."""
    return [
        Workload("MatMul", 439_000, 470_000, 1.67e-3, 2.21e-3, _script(writes=[0])),
        Workload("FIR", 336_000, 352_000, 1.44e-3, 1.56e-3, _script(writes=[1])),
        # inputs are sampled right before the digest is published
        Workload("SHA256", 246_000, 265_000, 1.04e-3, 1.37e-3,
                 _script(reads=[0, 1, 2, 3], writes=[4], read_at=100, write_at=100)),
        Workload("FloatMath", 1_890, 1_900, 5.6e-6, 5.7e-6, _script(writes=[2])),
        Workload("IntMath", 1_500, 1_530, 4.3e-6, 4.4e-6, _script(writes=[3])),
    ]


_INT_KEYS = ("vm_time_us", "nvm_time_us", "vm_energy_nj", "nvm_energy_nj", "stack_size")


def parse_workloads(text: str) -> list[Workload]:
    """Parse ``[workload]`` sections of ``key = value`` and ``at <pct> op <obj>`` lines."""
    out, cur, start = [], None, 0

    def finish():
        if cur is None:
            return
        missing = [k for k in ("name", *_INT_KEYS[:4]) if k not in cur]
        if missing:
            raise ConfigError(f"line {start}: workload missing {', '.join(missing)}")
        if not cur["script"]:
            raise ConfigError(f"line {start}: workload {cur['name']} has no script")
        try:
            out.append(Workload(
                cur["name"], cur["vm_time_us"], cur["nvm_time_us"],
                cur["vm_energy_nj"] / 1e9, cur["nvm_energy_nj"] / 1e9,
                tuple(cur["script"]), repeat=cur.get("repeat", True),
                stack_size=cur.get("stack_size", 256), long_running=cur.get("long_running")))
        except ConfigError as exc:
            raise ConfigError(f"line {start}: {exc}") from None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[workload]":
            finish()
            cur, start = {"script": []}, lineno
            continue
        if cur is None:
            raise ConfigError(f"line {lineno}: content before first [workload] section")
        if line == "commit":
            cur["script"].append(ScriptAction(100, "commit"))
            continue
        if line.startswith("at "):
            parts = line.split()
            if len(parts) != 4 or parts[2] not in ("read", "write"):
                raise ConfigError(f"line {lineno}: expected 'at <percent> read|write <obj>'")
            try:
                cur["script"].append(ScriptAction(float(parts[1]), parts[2], int(parts[3])))
            except ValueError:
                raise ConfigError(f"line {lineno}: bad number in script line") from None
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "name":
            cur[key] = val
        elif key in _INT_KEYS:
            try:
                cur[key] = int(val)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} must be an integer") from None
        elif key == "repeat":
            cur[key] = val.lower() in ("1", "true", "yes")
        elif key == "kind":
            if val not in ("lengthy", "short"):
                raise ConfigError(f"line {lineno}: kind must be lengthy or short")
            cur["long_running"] = val == "lengthy"
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    finish()
    if not out:
        raise ConfigError("no workloads defined")
    return out


def load_workload_file(path) -> list[Workload]:
    return parse_workloads(Path(path).read_text())


def dumps_workloads(workloads) -> str:
    lines = []
    for w in workloads:
        lines += [
            "[workload]",
            f"name = {w.name}",
            f"vm_time_us = {w.vm_time_us}",
            f"nvm_time_us = {w.nvm_time_us}",
            f"vm_energy_nj = {round(w.vm_energy_j * 1e9)}",
            f"nvm_energy_nj = {round(w.nvm_energy_j * 1e9)}",
            f"stack_size = {w.stack_size}",
            f"repeat = {str(w.repeat).lower()}",
            f"kind = {'lengthy' if w.long_running else 'short'}",
        ]
        for a in w.script:
            lines.append("commit" if a.op == "commit" else f"at {a.at:g} {a.op} {a.obj}")
        lines.append("")
    return "\n".join(lines)


@dataclass
class RandomWorkloadSpec:
    """Knobs for :func:`random_workloads`."""

    max_tasks: int = 6
    max_objects: int = 5
    max_actions: int = 4
    short_time_us: tuple = (800, 6_000)
    long_time_us: tuple = (20_000, 120_000)
    long_fraction: float = 0.3
    power_w: tuple = (2.5e-3, 5.0e-3)
    repeat: bool = True
    extra: dict = field(default_factory=dict)


def random_workloads(rng: random.Random, spec: RandomWorkloadSpec | None = None,
                     n_tasks=None, n_objects=None) -> tuple[list[Workload], int]:
    """Random read/write scripts over a small object pool; returns (workloads, n_objects)."""
    spec = spec or RandomWorkloadSpec()
    n_tasks = n_tasks or rng.randint(2, spec.max_tasks)
    n_objects = n_objects or rng.randint(1, spec.max_objects)
    out = []
    for i in range(n_tasks):
        long = rng.random() < spec.long_fraction
        lo, hi = spec.long_time_us if long else spec.short_time_us
        vm_t = rng.randint(lo, hi)
        nvm_t = vm_t + rng.randint(0, vm_t // 10)
        p = rng.uniform(*spec.power_w)
        vm_e = round(p * vm_t * 1e-6 * 1e9) / 1e9
        nvm_e = max(vm_e, round(p * 1.1 * nvm_t * 1e-6 * 1e9) / 1e9)
        acts = []
        for _ in range(rng.randint(1, spec.max_actions)):
            acts.append(ScriptAction(float(rng.randint(0, 100)), rng.choice(("read", "write")),
                                     rng.randrange(n_objects)))
        acts.sort(key=lambda a: a.at)
        acts.append(ScriptAction(100, "commit"))
        out.append(Workload(f"T{i}", vm_t, nvm_t, vm_e, nvm_e, tuple(acts), repeat=spec.repeat))
    return out, n_objects


def initial_value(obj: int, size: int) -> bytes:
    """Default initial contents of data object ``obj``."""
    return _expand(b"init|%d" % obj, size)


def task_output(record_id: int, obj: int, write_index: int, observed, size: int) -> bytes:
    """Value a task writes: a digest of its identity and everything it has read.

    Deterministic in what the task observed, so a serial re-execution of
    the same task over the same inputs reproduces it byte for byte.
    """
    h = hashlib.sha256(b"out|%d|%d|%d" % (record_id, obj, write_index))
    for v in observed:
        h.update(len(v).to_bytes(2, "little"))
        h.update(v)
    return _expand(h.digest(), size)


def _expand(seed: bytes, size: int) -> bytes:
    out, block = b"", hashlib.sha256(seed).digest()
    while len(out) < size:
        out += block
        block = hashlib.sha256(block).digest()
    return out[:size]
