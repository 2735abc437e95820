"""Load-step scenarios, model comparison against the high-order reference,
RMSE metrics and CSV export.

Every model starts from the high-order equilibrium at the initial load.  At
each event the load jumps and, when the event carries a target, the
regulator set point switches to the value that holds the high-order
equilibrium bus voltage at that target under the new load.  The set points
are computed once per scenario and shared by all models.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .exceptions import ContractError, DivergenceError, FileError, ParameterError
from .models import MODEL_KINDS
from .network import ClassicalSystem, LoadDemand, autotune_vref, make_system
from .params import MachineParameters, parse_key_values, table2
from .solver import Equilibrium, Event, IntegratorConfig, Solution, find_equilibrium, integrate

REFERENCE = "high-order"
RMSE_SIGNALS = ("omega_rpm", "V_s", "delta_deg")
CSV_COLUMNS = (
    ("t", "s"), ("delta_s", "deg"), ("omega_s", "rad/s"), ("omega_s", "rpm"),
    ("V_s", "pu"), ("V_l", "pu"), ("delta_l", "deg"),
)


@dataclass(frozen=True)
class LoadEvent:
    """Load step at ``t``; ``target`` is the bus voltage the regulator set
    point is retuned for (``None`` keeps the current set point)."""

    t: float
    P_L: float
    Q_L: float = 0.0
    target: Optional[float] = 1.0


def default_config(kind: str) -> IntegratorConfig:
    """Trapezoidal rule at 1 ms, sampled every 10 ms."""
    return IntegratorConfig(method="implicit-trapezoidal", dt=1e-3, record_every=10)


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    initial_load: LoadDemand
    events: tuple = ()
    models: tuple = MODEL_KINDS[1:]
    initial_target: float = 1.0
    configs: Mapping[str, IntegratorConfig] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "models", tuple(self.models))
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ContractError("duration must be finite and non-negative")
        times = [e.t for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ContractError("event times must be strictly increasing")
        if times and (times[0] <= 0 or times[-1] >= self.duration):
            raise ContractError("event times must lie inside (0, duration)")
        unknown = [m for m in self.models if m not in MODEL_KINDS]
        if unknown:
            raise ContractError(f"unknown model(s) {unknown}; expected a subset of {MODEL_KINDS}")

    def config(self, kind: str) -> IntegratorConfig:
        return self.configs.get(kind, default_config(kind))

    def with_config(self, **overrides) -> "Scenario":
        """Apply the same integrator overrides to every model."""
        kinds = set(self.models) | {REFERENCE}
        return replace(self, configs={k: replace(self.config(k), **overrides) for k in kinds})


def case1_scenario() -> Scenario:
    """Single load step 0.05 -> 0.25 pu at 30 s, bus voltage held at 1 pu."""
    return Scenario("case1", 90.0, LoadDemand(0.05), (LoadEvent(30.0, 0.25),))


_CASE2_LEVELS = (0.25, 0.35, 0.3, 0.15)


def case2_scenario(compressed: bool = False) -> Scenario:
    """Four load steps; ``compressed`` keeps the levels on a 270 s schedule."""
    if compressed:
        times, duration, name = (30.0, 90.0, 150.0, 210.0), 270.0, "case2-compressed"
    else:
        times, duration, name = (30.0, 1530.0, 3030.0, 4530.0), 6000.0, "case2"
    events = tuple(LoadEvent(t, P) for t, P in zip(times, _CASE2_LEVELS))
    return Scenario(name, duration, LoadDemand(0.05), events)


BUILTIN_SCENARIOS = {
    "case1": case1_scenario,
    "case2": case2_scenario,
    "case2-compressed": lambda: case2_scenario(compressed=True),
}


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse the key/value scenario format.

    Keys: ``name``, ``duration``, ``P_L``, ``Q_L``, ``target``, ``models``
    (comma separated), ``method``, ``dt``, ``record_every`` and repeated
    ``event = t, P_L, Q_L, target`` lines (``target`` may be ``none``).
    """
    entries = parse_key_values(text, source)
    known = {"name", "duration", "P_L", "Q_L", "target", "models", "method", "dt", "record_every", "event"}
    for key, entry in entries.items():
        if key not in known:
            line = (entry[0] if isinstance(entry, list) else entry)[1]
            raise ParameterError(f"{source}:{line}: unknown key '{key}'", field=key, line=line)
        if key != "event" and isinstance(entry, list):
            raise ParameterError(f"{source}:{entry[-1][1]}: duplicate key '{key}'", field=key, line=entry[-1][1])

    def num(key, value, line):
        try:
            return float(value)
        except ValueError:
            raise ParameterError(f"{source}:{line}: '{key}' is not a number: {value!r}", field=key, line=line) from None

    def get(key, default):
        if key not in entries:
            return default
        value, line = entries[key]
        return num(key, value, line)

    if "duration" not in entries:
        raise ParameterError(f"{source}: missing 'duration'", field="duration")
    events = []
    raw_events = entries.get("event", [])
    for value, line in raw_events if isinstance(raw_events, list) else [raw_events]:
        parts = [s.strip() for s in value.split(",")]
        if len(parts) not in (2, 3, 4):
            raise ParameterError(f"{source}:{line}: event needs 't, P_L[, Q_L[, target]]'", field="event", line=line)
        t, P = num("event", parts[0], line), num("event", parts[1], line)
        Q = num("event", parts[2], line) if len(parts) > 2 else 0.0
        target = 1.0
        if len(parts) > 3:
            target = None if parts[3].lower() == "none" else num("event", parts[3], line)
        events.append(LoadEvent(t, P, Q, target))
    models = MODEL_KINDS[1:]
    if "models" in entries:
        models = tuple(m.strip() for m in entries["models"][0].split(",") if m.strip())
    cfg = {}
    if "method" in entries:
        cfg["method"] = entries["method"][0]
    if "dt" in entries:
        cfg["dt"] = get("dt", None)
    if "record_every" in entries:
        cfg["record_every"] = int(get("record_every", None))
    try:
        scenario = Scenario(
            entries["name"][0] if "name" in entries else Path(source).stem,
            get("duration", None), LoadDemand(get("P_L", 0.05), get("Q_L", 0.0)), tuple(events), models,
            get("target", 1.0),
        )
        return scenario.with_config(**cfg) if cfg else scenario
    except ContractError as exc:
        raise ParameterError(f"{source}: {exc}") from exc


def load_scenario(source: Union[str, os.PathLike]) -> Scenario:
    """Built-in name (``case1``, ``case2``, ``case2-compressed``) or a file path."""
    if str(source) in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[str(source)]()
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, str(path))


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Uniformly sampled outputs of one run; angles unwrapped, in degrees."""

    model: str
    t: np.ndarray
    delta_deg: np.ndarray
    omega: np.ndarray
    V_s: np.ndarray
    V_l: np.ndarray
    delta_l_deg: np.ndarray
    complete: bool = True
    message: str = ""

    @property
    def omega_rpm(self) -> np.ndarray:
        return self.omega * 60.0 / (2.0 * math.pi)

    def __len__(self):
        return self.t.size

    def signal(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @classmethod
    def from_solution(cls, model: str, sol: Solution) -> "Trajectory":
        if sol.t.size == 0:
            e = np.zeros(0)
            return cls(model, e, e, e, e, e, e, sol.success, sol.message)
        return cls(
            model, sol.t.copy(),
            np.degrees(np.unwrap(sol.y[:, 0])), sol.y[:, 1].copy(),
            sol.obs[:, 0].copy(), sol.obs[:, 3].copy(), np.degrees(np.unwrap(sol.obs[:, 4])),
            sol.success, sol.message,
        )

    def resample(self, t) -> "Trajectory":
        """Linear interpolation onto ``t`` (which must lie inside the span)."""
        t = np.asarray(t, dtype=float)
        f = lambda v: np.interp(t, self.t, v)  # noqa: E731
        return Trajectory(self.model, t, f(self.delta_deg), f(self.omega), f(self.V_s), f(self.V_l),
                          f(self.delta_l_deg), self.complete, self.message)

    def columns(self) -> list:
        return [self.t, self.delta_deg, self.omega, self.omega_rpm, self.V_s, self.V_l, self.delta_l_deg]


def export_csv(traj: Trajectory, path: Union[str, os.PathLike]) -> Path:
    """Write ``traj`` with a units header and 17 significant digits."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(",".join(f"{n} [{u}]" for n, u in CSV_COLUMNS) + "\n")
    for row in zip(*traj.columns()):
        buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    try:
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: Union[str, os.PathLike], model: str = "") -> Trajectory:
    """Inverse of :func:`export_csv`."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc}") from exc
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln], dtype=float)
    data = data.reshape(-1, len(CSV_COLUMNS))
    t, d, w, _, V_s, V_l, dl = data.T
    return Trajectory(model or path.stem, t, d, w, V_s, V_l, dl)


# --------------------------------------------------------------------------
# metrics


def rmse(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0:
        return math.nan
    return float(np.sqrt(np.mean((a - b) ** 2)))


def window_rmse(traj: Trajectory, ref: Trajectory, signal: str, t0: float, t1: float) -> float:
    """RMS difference of ``signal`` over reference samples with ``t0 <= t <= t1``."""
    mask = (ref.t >= t0) & (ref.t <= t1)
    if traj.t.size:
        mask &= ref.t <= traj.t[-1]
    t = ref.t[mask]
    return rmse(np.interp(t, traj.t, traj.signal(signal)), ref.signal(signal)[mask])


@dataclass
class RmseReport:
    """Per-model RMSE of each signal against the reference trajectory."""

    reference: str
    values: dict
    spans: dict = field(default_factory=dict)

    def __getitem__(self, model: str) -> dict:
        return self.values[model]

    def models(self) -> list:
        return list(self.values)

    def to_text(self) -> str:
        head = f"{'model':<13}" + "".join(f"{s:>16}" for s in RMSE_SIGNALS)
        lines = [f"RMSE vs {self.reference}", head]
        for model, row in self.values.items():
            line = f"{model:<13}" + "".join(f"{row[s]:>16.6g}" for s in RMSE_SIGNALS)
            end = self.spans.get(model)
            if end is not None:
                line += f"   (up to t = {end:g} s)"
            lines.append(line)
        return "\n".join(lines) + "\n"


def compare(trajectories: Mapping[str, Trajectory], reference: Trajectory) -> RmseReport:
    """RMSE of every trajectory on the reference sample grid.

    A trajectory that stopped early is compared over the span it covers.
    """
    values, spans = {}, {}
    for name, traj in trajectories.items():
        if traj.t.size == 0:
            values[name] = {s: math.nan for s in RMSE_SIGNALS}
            continue
        mask = reference.t <= traj.t[-1] + 1e-12
        ref_t = reference.t[mask]
        res = traj.resample(ref_t)
        values[name] = {s: rmse(res.signal(s), reference.signal(s)[mask]) for s in RMSE_SIGNALS}
        if not traj.complete:
            spans[name] = float(traj.t[-1])
    return RmseReport(reference.model, values, spans)


# --------------------------------------------------------------------------
# running


@dataclass
class OperatingPlan:
    """Tuned set points shared by every model in a scenario."""

    params: MachineParameters
    equilibrium: Equilibrium
    vrefs: tuple


def prepare(scenario: Scenario, params: Optional[MachineParameters] = None) -> OperatingPlan:
    """Initial equilibrium (governor set point pinned to nominal speed when
    unset) and the regulator set point after every event."""
    p = params if params is not None else table2()
    V_r, eq = autotune_vref(p, None, scenario.initial_load, scenario.initial_target)
    pp = eq.params.with_operating_point(V_r_s=V_r)
    vrefs = []
    current = pp
    for ev in scenario.events:
        if ev.target is not None:
            V_new, _ = autotune_vref(current, None, LoadDemand(ev.P_L, ev.Q_L), ev.target)
            current = current.with_operating_point(V_r_s=V_new)
        vrefs.append(current.V_r_s)
    return OperatingPlan(pp, eq, tuple(vrefs))


def _events(scenario: Scenario, plan: OperatingPlan, retune: bool):
    out = []
    for ev, V_r in zip(scenario.events, plan.vrefs):
        def action(system, ev=ev, V_r=V_r):
            system.set_load(LoadDemand(ev.P_L, ev.Q_L))
            if retune:
                system.set_vref(V_r)
        out.append(Event(ev.t, action))
    return out


def build_system(kind: str, plan: OperatingPlan, load: LoadDemand):
    """System and initial state for ``kind`` at the plan's equilibrium."""
    eq = plan.equilibrium
    if kind == REFERENCE:
        return make_system(kind, plan.params, load, eq.bus), eq.y.copy()
    y0 = eq.y[:2].copy()
    if kind == "classical":
        # frozen mechanical torque that holds nominal speed at the initial load
        T_m0 = load.P_L + plan.params.D0_tilde * plan.params.omega0
        system = ClassicalSystem(plan.params, load, E_0=1.0, T_m0=T_m0, bus=eq.bus)
        ceq = find_equilibrium(system, y0, eq.bus, tune="E_0")
        system.set_E0(ceq.tuned["E_0"])
        system.bus = ceq.bus
        return system, y0
    return make_system(kind, plan.params, load, eq.bus), y0


def simulate(kind: str, scenario: Scenario, plan: Optional[OperatingPlan] = None, *,
             params: Optional[MachineParameters] = None, strict: bool = True) -> Trajectory:
    """Run one model through ``scenario``.

    With ``strict=False`` an integration failure returns the partial
    trajectory (``complete`` False) instead of raising.
    """
    if kind not in MODEL_KINDS:
        raise ContractError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
    plan = plan if plan is not None else prepare(scenario, params)
    system, y0 = build_system(kind, plan, scenario.initial_load)
    events = _events(scenario, plan, retune=kind != "classical")
    try:
        sol = integrate(system, y0, (0.0, scenario.duration), scenario.config(kind), events)
    except DivergenceError as exc:
        if strict or exc.partial is None:
            raise
        return Trajectory.from_solution(kind, exc.partial)
    return Trajectory.from_solution(kind, sol)


def run_comparison(scenario: Scenario, models: Optional[Iterable[str]] = None, *,
                   params: Optional[MachineParameters] = None, plan: Optional[OperatingPlan] = None,
                   strict: bool = True):
    """Run the reference and every model; return ``(trajectories, report)``.

    ``trajectories`` includes the reference under ``"high-order"``.  Models
    run one after another, each with its own system and integrator.
    """
    models = tuple(models) if models is not None else scenario.models
    plan = plan if plan is not None else prepare(scenario, params)
    ref = simulate(REFERENCE, scenario, plan)
    trajectories = {REFERENCE: ref}
    for kind in models:
        if kind != REFERENCE:
            trajectories[kind] = simulate(kind, scenario, plan, strict=strict)
    report = compare({k: v for k, v in trajectories.items() if k in models}, ref)
    return trajectories, report


def expected_rows(duration: float, cfg: IntegratorConfig) -> int:
    """Number of samples a run records on a uniform grid."""
    return int(round(duration / (cfg.record_every * cfg.dt))) + 1

