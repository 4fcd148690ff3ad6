"""Experiment configuration, metrics and scheme comparison."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean

from .baselines import CheckpointConfig, Scheme
from .engine import CostModel, MachineConfig, PowerParams, Simulator
from .errors import ConfigError
from .power import PowerTrace, load_trace
from .simcore import load_crash_schedule
from .workloads import builtin_workloads, load_workload_file, random_workloads

# reference ranges measured on hardware; reported next to our ratios, never asserted
REFERENCE_BANDS = {Scheme.SYS: (1.10, 1.49), Scheme.LOG: (1.08, 1.28)}

_SECTIONS = {
    "experiment": {"scheme", "trace", "duration_ms", "seed", "workloads", "crash_schedule",
                   "tick_us"},
    "checkpoint": {"period_ms", "suspension_cost_ms", "recovery_cost_ms", "proportional",
                   "per_unit_us", "chunk_bytes"},
    "costs": {f.name for f in dataclasses.fields(CostModel)},
    "power": {f.name for f in dataclasses.fields(PowerParams)},
    "machine": {f.name for f in dataclasses.fields(MachineConfig)} - {"initial_values"},
}


@dataclass
class ExperimentConfig:
    scheme: Scheme = Scheme.OURS
    trace: str = "strong"
    duration_ms: float | None = None
    seed: int = 0
    workloads: str = "builtin"
    crash_schedule: str | None = None
    tick_us: int = 1000
    checkpoint: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    power: dict = field(default_factory=dict)
    machine: dict = field(default_factory=dict)
    base_dir: str = "."

    # ------------------------------------------------------------ loading
    @classmethod
    def from_text(cls, text: str, base_dir=".") -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config syntax: {exc}") from None
        problems = []
        raw = {}
        for sec in cp.sections():
            if sec not in _SECTIONS:
                problems.append(f"unknown section [{sec}]")
                continue
            for key, value in cp.items(sec):
                if key not in _SECTIONS[sec]:
                    problems.append(f"[{sec}] unknown key {key!r}")
                else:
                    raw.setdefault(sec, {})[key] = value
        cfg = cls(base_dir=str(base_dir))
        exp = raw.get("experiment", {})
        conv = {"scheme": Scheme.parse, "duration_ms": float, "seed": int, "tick_us": int}
        for key, value in exp.items():
            try:
                setattr(cfg, key, conv[key](value) if key in conv else value.strip())
            except (ValueError, ConfigError):
                problems.append(f"[experiment] {key}: bad value {value!r}")
        for sec in ("checkpoint", "costs", "power", "machine"):
            out = getattr(cfg, sec)
            for key, value in raw.get(sec, {}).items():
                try:
                    out[key] = _scalar(value)
                except ValueError:
                    problems.append(f"[{sec}] {key}: bad value {value!r}")
        problems += cfg.problems()
        if problems:
            raise ConfigError(_summary(problems), problems)
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {str(path)!r} does not exist")
        return cls.from_text(path.read_text(), path.parent)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: (dict(v) if isinstance(v, dict) else v)
                                            for k, v in changes.items()})

    def _path(self, name) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p

    # --------------------------------------------------------- validation
    def problems(self) -> list[str]:
        """Every reason this configuration cannot run; empty when it can."""
        out = []
        if not isinstance(self.scheme, Scheme):
            try:
                self.scheme = Scheme.parse(self.scheme)
            except ConfigError as exc:
                out.append(str(exc))
        if self.duration_ms is not None and self.duration_ms < 0:
            out.append("duration_ms must be non-negative")
        if self.tick_us <= 0:
            out.append("tick_us must be positive")
        trace = None
        try:
            trace = self.load_trace()
        except ConfigError as exc:
            out.append(str(exc))
        if self.workloads not in ("builtin", "random"):
            if not self._path(self.workloads).exists():
                out.append(f"workload file {self.workloads!r} does not exist")
        if self.crash_schedule and not self._path(self.crash_schedule).exists():
            out.append(f"crash schedule {self.crash_schedule!r} does not exist")
        for name, kind in (("costs", CostModel), ("power", PowerParams),
                           ("machine", MachineConfig)):
            try:
                kind(**getattr(self, name))
            except (ConfigError, TypeError) as exc:
                out.append(f"[{name}] {exc}")
        if self.tick_us > 0:
            try:
                # capacitor settings do not depend on the trace contents
                PowerParams(**self.power).build(trace or PowerTrace.constant(0.0, 1),
                                                self.tick_us)
            except TypeError:
                pass  # unknown keys were reported above
            except ConfigError as exc:
                out.append(f"[power] {exc}")
        if isinstance(self.scheme, Scheme) and self.scheme in (Scheme.SYS, Scheme.LOG):
            try:
                self.checkpoint_config()
            except (ConfigError, TypeError) as exc:
                out.append(f"[checkpoint] {exc}")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(_summary(problems), problems)

    # ------------------------------------------------------------- build
    def checkpoint_config(self) -> CheckpointConfig | None:
        if self.scheme not in (Scheme.SYS, Scheme.LOG):
            return None
        return CheckpointConfig(self.scheme, **self.checkpoint)

    def load_trace(self):
        p = self._path(self.trace)
        return load_trace(str(p) if p.exists() else self.trace)

    def load_workloads(self):
        if self.workloads == "builtin":
            return builtin_workloads(), None
        if self.workloads == "random":
            return random_workloads(random.Random(self.seed))
        return load_workload_file(self._path(self.workloads)), None

    def build(self, record_events: bool = True) -> Simulator:
        self.validate()
        trace = self.load_trace()
        workloads, n_objects = self.load_workloads()
        crashes = load_crash_schedule(self._path(self.crash_schedule)) if self.crash_schedule else ()
        duration = None if self.duration_ms is None else round(self.duration_ms * 1000)
        return Simulator(workloads, trace, scheme=self.scheme,
                         checkpoint=self.checkpoint_config(), duration_us=duration,
                         tick_us=self.tick_us, power=PowerParams(**self.power),
                         costs=CostModel(**self.costs), machine=MachineConfig(**self.machine),
                         n_objects=n_objects, crash_schedule=crashes,
                         record_events=record_events)

    @property
    def label(self) -> str:
        if self.scheme in (Scheme.SYS, Scheme.LOG):
            return f"{self.scheme.value}({self.checkpoint_config().period_ms:g}ms)"
        return self.scheme.value


def _scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        return float(t)


def _summary(problems) -> str:
    return f"{len(problems)} configuration problem(s):\n" + "\n".join(f"  - {p}" for p in problems)


# ------------------------------------------------------------------ metrics
def _mean_ms(values_us) -> float:
    return fmean(values_us) / 1000 if values_us else 0.0


@dataclass
class MetricsReport:
    label: str
    scheme: str
    trace: str
    seed: int
    duration_ms: float
    finished: int
    finished_non_lengthy: int
    finished_lengthy: int
    finished_by_workload: dict
    forward_progress: dict
    suspension_time_ms: float
    recovery_time_ms: float
    data_recentness_ms: float
    checkpoints: int
    aborts: dict
    power_cycles: int
    crashes: int
    validation_calls: int
    event_log_digest: str

    @classmethod
    def from_simulation(cls, cfg: ExperimentConfig, sim: Simulator) -> "MetricsReport":
        st = sim.machine.stats
        secs = sim.duration_us / 1e6
        rate = (lambda n: n / secs) if secs > 0 else (lambda n: 0.0)
        return cls(
            label=cfg.label, scheme=cfg.scheme.value, trace=cfg.trace, seed=cfg.seed,
            duration_ms=sim.duration_us / 1000, finished=st.finished,
            finished_non_lengthy=st.finished_short, finished_lengthy=st.finished_long,
            finished_by_workload=dict(sorted(st.by_workload.items())),
            forward_progress={"total": rate(st.finished), "non_lengthy": rate(st.finished_short),
                              "lengthy": rate(st.finished_long)},
            suspension_time_ms=_mean_ms(sim.suspensions),
            recovery_time_ms=_mean_ms(sim.recoveries),
            data_recentness_ms=_mean_ms(sim.recentness),
            checkpoints=len(sim.suspensions), aborts=dict(sim.aborts),
            power_cycles=sim.power_cycles, crashes=sim.crashes,
            validation_calls=sim.vstats.calls, event_log_digest=sim.digest)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["digest"] = self.digest
        return d

    @property
    def digest(self) -> str:
        body = json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> MetricsReport:
    """Run one configuration; with ``out_dir``, also write report.json and events.ndjson."""
    sim = cfg.build(record_events=out_dir is not None).run()
    report = MetricsReport.from_simulation(cfg, sim)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True)
                                         + "\n")
        with open(out / "events.ndjson", "w") as f:
            for ev in sim.events:
                f.write(json.dumps(ev, sort_keys=True, separators=(",", ":")) + "\n")
    return report


# --------------------------------------------------------------- comparison
def parse_schemes(text: str, default_period_ms=20) -> list[tuple[Scheme, int | None]]:
    """``ours,sys,log@200`` -> [(OURS, None), (SYS, 20), (LOG, 200)]."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, period = item.partition("@")
        scheme = Scheme.parse(name)
        if scheme in (Scheme.SYS, Scheme.LOG):
            try:
                p = int(period) if period else default_period_ms
            except ValueError:
                raise ConfigError(f"bad checkpoint period in {item!r}") from None
            out.append((scheme, p))
        elif period:
            raise ConfigError(f"{scheme.value} takes no checkpoint period")
        else:
            out.append((scheme, None))
    if not out:
        raise ConfigError("no schemes given")
    return out


@dataclass
class Comparison:
    reports: list
    ratios: list

    def table(self) -> str:
        head = (f"{'scheme':<12}{'fp/s':>9}{'non-lengthy':>13}{'lengthy':>9}{'susp ms':>9}"
                f"{'recov ms':>10}{'recent ms':>11}{'cycles':>8}")
        lines = [head, "-" * len(head)]
        for r in self.reports:
            fp = r.forward_progress
            lines.append(f"{r.label:<12}{fp['total']:>9.2f}{fp['non_lengthy']:>13.2f}"
                         f"{fp['lengthy']:>9.3f}{r.suspension_time_ms:>9.2f}"
                         f"{r.recovery_time_ms:>10.2f}{r.data_recentness_ms:>11.2f}"
                         f"{r.power_cycles:>8d}")
        for row in self.ratios:
            band = row["reference_band"]
            ref = f"  reference {band[0]:.2f}-{band[1]:.2f}" if band else ""
            lines.append(f"{row['ratio']:<24}{row['value']:>8.3f}{ref}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["label", "scheme", "fp_total", "fp_non_lengthy", "fp_lengthy",
                        "suspension_ms", "recovery_ms", "recentness_ms", "power_cycles"])
            for r in self.reports:
                fp = r.forward_progress
                w.writerow([r.label, r.scheme, f"{fp['total']:.6f}", f"{fp['non_lengthy']:.6f}",
                            f"{fp['lengthy']:.6f}", f"{r.suspension_time_ms:.6f}",
                            f"{r.recovery_time_ms:.6f}", f"{r.data_recentness_ms:.6f}",
                            r.power_cycles])


def _run_quiet(cfg):
    return run_experiment(cfg)


def compare(cfg: ExperimentConfig, schemes, jobs: int = 1, out_dir=None) -> Comparison:
    """Run every scheme on the same trace, workloads and seed."""
    if isinstance(schemes, str):
        schemes = parse_schemes(schemes, cfg.checkpoint.get("period_ms", 20))
    variants = []
    for scheme, period in schemes:
        ck = dict(cfg.checkpoint) if period is not None else {}
        if period is not None:
            ck["period_ms"] = period
        variants.append(cfg.replace(scheme=scheme, checkpoint=ck, crash_schedule=None))
    for v in variants:
        v.validate()
    if jobs > 1 and len(variants) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_quiet, variants))
    else:
        reports = [_run_quiet(v) for v in variants]
    ratios = []
    ours = [r for r in reports if r.scheme == Scheme.OURS.value]
    if ours:
        base = ours[0].forward_progress["non_lengthy"]
        for r in reports:
            sch = Scheme(r.scheme)
            if sch not in REFERENCE_BANDS:
                continue
            other = r.forward_progress["non_lengthy"]
            ratios.append({"ratio": f"OURS/{r.label}", "value": base / other if other else
                           float("inf"), "reference_band": REFERENCE_BANDS[sch]})
    result = Comparison(reports, ratios)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "compare.csv")
        (out / "compare.json").write_text(json.dumps(
            {"reports": [r.to_dict() for r in reports], "ratios": ratios}, indent=2) + "\n")
    return result
