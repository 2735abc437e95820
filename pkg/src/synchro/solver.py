"""Fixed-step integration, equilibrium search and finite-difference Jacobians."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import (
    ContractError, ConvergenceError, DivergenceError, DomainError, EquilibriumError, StepFailureError,
)
from .models import BusSignal
from .params import MachineParameters

METHODS = ("rk4-fixed", "implicit-trapezoidal")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4-fixed"
    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max: int = 8
    record_every: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ContractError("dt must be positive")
        if not self.newton_tol > 0:
            raise ContractError("newton_tol must be positive")
        if self.newton_max < 1 or self.record_every < 1:
            raise ContractError("newton_max and record_every must be at least 1")


@dataclass(frozen=True)
class Event:
    """Change applied atomically to the problem at time ``t``."""

    t: float
    action: Callable


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    z: np.ndarray
    obs: np.ndarray
    success: bool = True
    message: str = ""


def finite_difference_jacobian(f: Callable, x, h=None) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x``.

    The default step is ``1e-7 * max(1, |x_i|)`` per component.
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-7 * np.maximum(1.0, np.abs(x))
    else:
        h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        cols.append((np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2 * h[i]))
    if not cols:
        return np.zeros((np.asarray(f(x)).size, 0))
    return np.column_stack(cols)


class _OdeProblem:
    """Adapter giving a plain ``f(t, y)`` the system protocol."""

    uses_rates = False

    def __init__(self, fun, n):
        self.fun = fun
        self.dynamic_index = np.arange(n)
        self.t = 0.0

    def rhs(self, t, y):
        return np.asarray(self.fun(t, y), dtype=float)

    def f(self, y, z, rates=None):
        return self.rhs(self.t, y)

    def g(self, y, z, rates=None):
        return np.zeros(0)

    def fg(self, y, z, rates=None):
        return self.f(y, z, rates), np.zeros(0)

    def algebraic(self):
        return np.zeros(0)

    def commit(self, t, y, z=None, dt=None):
        self.t = t
        return y

    def observe(self, y, z=None):
        return ()


def _check(y, z, t):
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise DivergenceError(f"non-finite state after t = {t:g} s", t_last=t)


class _Recorder:
    def __init__(self, problem):
        self.problem = problem
        self.t, self.y, self.z, self.obs = [], [], [], []

    def add(self, t, y, z):
        self.t.append(t)
        self.y.append(np.array(y, dtype=float))
        self.z.append(np.array(z, dtype=float))
        self.obs.append(tuple(self.problem.observe(y, z if z.size else None)))

    def solution(self, success=True, message=""):
        n = len(self.t)
        y = np.array(self.y) if n else np.zeros((0, 0))
        z = np.array(self.z) if n else np.zeros((0, 0))
        obs = np.array(self.obs, dtype=float) if n else np.zeros((0, 0))
        return Solution(np.array(self.t), y, z, obs, success, message)


class _Trapezoidal:
    """Implicit trapezoidal rule on the differential states with the bus
    residual imposed at the new point (index-1 DAE), modified Newton."""

    def __init__(self, problem, cfg: IntegratorConfig):
        self.p = problem
        self.cfg = cfg
        self.inv = None
        self.inv_h = None

    def start(self, y, z, rates, zdot=None):
        self.fn = self.p.f(y, z, rates) if z.size else self.p.rhs(self.p.t, y)
        # the bus drifts with the rotor when off nominal speed; an event
        # jumps the bus but leaves that drift rate in place
        self.zdot = np.zeros(z.size) if zdot is None else np.array(zdot, dtype=float)
        self.inv = None

    def _residual(self, u, y_n, z_n, h, di, y_work):
        nd = di.size
        y_work[di] = u[:nd]
        z = u[nd:]
        if z.size:
            rates = ((z[0] - z_n[0]) / h, (z[1] - z_n[1]) / h) if self.p.uses_rates else (0.0, 0.0)
            fy, gz = self.p.fg(y_work, z, rates)
        else:
            fy = self.p.rhs(self.p.t + h, y_work)
            gz = np.zeros(0)
        return np.concatenate([u[:nd] - y_n[di] - 0.5 * h * (self.fn[di] + fy[di]), gz]), fy

    def step(self, t, y_n, z_n, h):
        di = self.p.dynamic_index
        nd = di.size
        y_work = y_n.copy()
        # explicit predictor on both blocks
        u = np.concatenate([y_n[di] + h * self.fn[di], z_n + h * self.zdot])
        tol = self.cfg.newton_tol
        r = None
        for attempt in range(2):
            if self.inv is None or self.inv_h != h or attempt == 1:
                J = finite_difference_jacobian(lambda v: self._residual(v, y_n, z_n, h, di, y_work.copy())[0], u)
                try:
                    # the iteration matrix is small; its explicit inverse is
                    # cheaper to apply than triangular solves
                    self.inv = np.linalg.inv(J)
                except np.linalg.LinAlgError as exc:
                    raise StepFailureError(f"singular Newton matrix at t = {t:g}") from exc
                if not np.isfinite(self.inv).all():
                    raise StepFailureError(f"singular Newton matrix at t = {t:g}")
                self.inv_h = h
            v = u.copy()
            ok = False
            prev = math.inf
            for it in range(self.cfg.newton_max):
                try:
                    r, fy = self._residual(v, y_n, z_n, h, di, y_work)
                except ConvergenceError:
                    break
                if not math.isfinite(r.sum()):
                    break
                dv = self.inv @ r
                v -= dv
                size = np.abs(dv).max()
                if size < tol:
                    ok = True
                    break
                if size > 2 * prev and it > 1:
                    break
                prev = size
            if ok:
                r, fy = self._residual(v, y_n, z_n, h, di, y_work)
                self.fn = fy
                self.zdot = (v[nd:] - z_n) / h
                y_new = y_n.copy()
                y_new[di] = v[:nd]
                return y_new, v[nd:]
        res = float(np.max(np.abs(r))) if r is not None else math.nan
        raise StepFailureError(f"Newton failed on step at t = {t:g}", residual=res, iterations=self.cfg.newton_max)


def integrate(rhs, y0, t_span, cfg: IntegratorConfig = IntegratorConfig(), events: Sequence[Event] = ()) -> Solution:
    """Fixed-step integration from ``t_span[0]`` to ``t_span[1]``.

    ``rhs`` is either a callable ``f(t, y)`` or a two-bus system object.
    Events are applied between steps; a step is shortened to land exactly on
    an event time.  On a non-finite state a :class:`DivergenceError` is
    raised whose ``partial`` attribute holds the samples recorded so far.
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("initial state is not finite")
    t0, t1 = map(float, t_span)
    if t1 < t0:
        raise ContractError("t_span must be increasing")
    events = list(events)
    if any(b.t <= a.t for a, b in zip(events, events[1:])):
        raise ContractError("event times must be strictly increasing")
    problem = rhs if hasattr(rhs, "commit") else _OdeProblem(rhs, y.size)
    if cfg.method == "rk4-fixed" and getattr(problem, "uses_rates", False):
        # lagged bus rates feed back through the damping terms and blow up
        raise ContractError(f"the {problem.kind} model needs bus rates solved implicitly; "
                            "use method='implicit-trapezoidal'")
    problem.t = t0
    z = np.asarray(problem.algebraic(), dtype=float)
    y = np.asarray(problem.commit(t0, y, None), dtype=float)
    z = np.asarray(problem.algebraic(), dtype=float)
    rec = _Recorder(problem)
    rec.add(t0, y, z)
    trap = _Trapezoidal(problem, cfg) if cfg.method == "implicit-trapezoidal" else None
    if trap:
        trap.start(y, z, problem.rates if hasattr(problem, "rates") else None)

    dt = cfg.dt
    count = 0
    t = t0
    stops = [e.t for e in events if t0 < e.t < t1] + [t1]
    pending = [e for e in events if t0 < e.t < t1]
    pre = [e for e in events if e.t <= t0]
    for e in pre:
        e.action(problem)
    if pre:
        y, z = _restart(problem, t0, y, trap)
    try:
        for stop in stops:
            n_full = int(math.floor((stop - t) / dt + 1e-9))
            rem = (stop - t) - n_full * dt
            seg_start = t
            steps = [dt] * n_full
            if rem > 1e-9 * dt:
                steps.append(rem)
            for k, h in enumerate(steps):
                t_new = seg_start + (k + 1) * dt if h == dt else stop
                if trap is None:
                    y = _rk4_step(problem, t, y, h)
                    _check(y, z, t)
                    y = np.asarray(problem.commit(t_new, y, None, h), dtype=float)
                    z = np.asarray(problem.algebraic(), dtype=float)
                else:
                    y, z = trap.step(t, y, z, h)
                    _check(y, z, t)
                    y = np.asarray(problem.commit(t_new, y, z if z.size else None, h), dtype=float)
                t = t_new
                count += 1
                if count % cfg.record_every == 0 or (stop == t1 and k == len(steps) - 1 and rec.t[-1] != t):
                    rec.add(t, y, z)
            t = stop
            if pending and stop == pending[0].t:
                pending.pop(0).action(problem)
                y, z = _restart(problem, t, y, trap)
    except (DivergenceError, ConvergenceError, DomainError, FloatingPointError, OverflowError) as exc:
        partial = rec.solution(False, str(exc))
        if isinstance(exc, DivergenceError):
            exc.partial = partial
            raise
        raise DivergenceError(f"integration failed after t = {t:g} s: {exc}", t_last=t, partial=partial) from exc
    return rec.solution()


def _restart(problem, t, y, trap):
    """Re-solve the algebraic variables after an event."""
    z = np.asarray(problem.algebraic(), dtype=float)
    if z.size:
        bus = problem.solve(y)
        problem.bus = bus
        z = np.array([bus.V_l, bus.delta_l])
    if trap:
        trap.start(y, z, getattr(problem, "rates", None), trap.zdot)
    return y, z


def _rk4_step(problem, t, y, h):
    k1 = problem.rhs(t, y)
    k2 = problem.rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = problem.rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = problem.rhs(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# --------------------------------------------------------------------------
# equilibria


@dataclass
class Equilibrium:
    """Steady state of a two-bus system.

    ``y`` is the full state, ``bus`` carries ``delta_l_dot = omega - omega0``
    (a relative equilibrium drifts in absolute angle when off nominal
    speed), and ``params`` holds any tuned set point.
    """

    y: np.ndarray
    bus: BusSignal
    params: MachineParameters
    rhs_residual: float
    bus_residual: float
    iterations: int
    tuned: dict = field(default_factory=dict)


_TUNABLE = ("P_c", "E_0")


def find_equilibrium(system, guess, bus_guess: BusSignal, *, tune: Optional[str] = None, tol: float = 1e-11,
                     max_iter: int = 60) -> Equilibrium:
    """Newton solve for a (relative) equilibrium of ``system``.

    Unknowns are the non-angle dynamic states plus the bus ``(V_l, delta_l)``;
    ``delta_s`` stays at its guess because shifting both angles together is
    a symmetry of the two-bus system.  ``tune`` adds one set point
    (``"P_c"`` for the high-order governor, ``"E_0"`` for the classical
    model) and the extra equation ``omega = omega0``.

    Pseudo-transient continuation is used when plain Newton stalls.
    """
    if tune is not None and tune not in _TUNABLE:
        raise ContractError(f"tune must be one of {_TUNABLE}")
    y = np.array(guess, dtype=float)
    omega0 = system.p.omega0
    di = np.array([i for i in system.dynamic_index if i != 0])
    nd = di.size

    def apply_tuned(value):
        if tune == "P_c":
            system.set_params(system.p.with_operating_point(P_c=value))
        elif tune == "E_0":
            system.set_E0(value)

    def unpack(u):
        yy = y.copy()
        yy[di] = u[:nd]
        if tune:
            apply_tuned(u[nd + 2])
        return yy, u[nd:nd + 2]

    def F(u):
        yy, z = unpack(u)
        rates = (0.0, yy[1] - omega0)
        dy = system.f(yy, z, rates)
        parts = [dy[di], system.g(yy, z, rates)]
        if tune:
            parts.append([yy[1] - omega0])
        return np.concatenate(parts)

    u = np.concatenate([y[di], [bus_guess.V_l, bus_guess.delta_l]])
    if tune == "P_c":
        u = np.append(u, system.p.P_c if system.p.P_c is not None else 0.0)
    elif tune == "E_0":
        u = np.append(u, system.E_0 if system.E_0 is not None else 1.0)

    u, iters, ok = _newton(F, u, tol, max_iter)
    if not ok:
        u, iters2, ok = _pseudo_transient(F, u, nd, tol, max_iter * 10)
        iters += iters2
        if ok:
            u, it3, ok = _newton(F, u, tol, max_iter)
            iters += it3
    r = F(u)
    if not ok:
        raise EquilibriumError("equilibrium not found", residual=float(np.max(np.abs(r))), iterations=iters)
    yy, z = unpack(u)
    bus = BusSignal(float(z[0]), float(z[1]), 0.0, float(yy[1] - omega0))
    yy = np.asarray(system._resolve(yy, bus), dtype=float)
    dy = system.f(yy, z, (0.0, yy[1] - omega0))
    g = system.g(yy, z, (0.0, yy[1] - omega0))
    tuned = {tune: float(u[nd + 2])} if tune else {}
    return Equilibrium(yy, bus, system.p, float(np.max(np.abs(dy[di]))), float(np.max(np.abs(g))), iters, tuned)


def _newton(F, u, tol, max_iter):
    r = F(u)
    norm = float(np.max(np.abs(r)))
    for it in range(max_iter):
        if norm < tol:
            return u, it, True
        J = finite_difference_jacobian(F, u)
        try:
            du = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return u, it, False
        if np.max(np.abs(du)) < 1e-13 * (1 + np.max(np.abs(u))):
            # stagnated at rounding level of stiff rows
            return u, it, True
        lam = 1.0
        while lam > 1e-4:
            un = u + lam * du
            try:
                rn = F(un)
            except (ConvergenceError, DomainError, ZeroDivisionError):
                rn = None
            if rn is not None and np.all(np.isfinite(rn)) and np.max(np.abs(rn)) < (1 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            # no decrease: accept a converged point limited by rounding
            return u, it, norm < 1e3 * tol
        u, r, norm = un, rn, float(np.max(np.abs(rn)))
        if np.max(np.abs(lam * du)) < 1e-15 * (1 + np.max(np.abs(u))) and norm < 1e3 * tol:
            return u, it + 1, True
    return u, max_iter, norm < tol


def _pseudo_transient(F, u, nd, tol, max_iter):
    """Switched-evolution-relaxation continuation on the differential rows."""
    S = np.zeros(u.size)
    S[:nd] = 1.0
    dtau = 1e-4
    r = F(u)
    norm = float(np.max(np.abs(r)))
    for it in range(max_iter):
        if norm < 1e-6:
            return u, it, True
        J = finite_difference_jacobian(F, u)
        try:
            du = np.linalg.solve(np.diag(S / dtau) - J, r)
        except np.linalg.LinAlgError:
            return u, it, False
        try:
            rn = F(u + du)
        except (ConvergenceError, DomainError, ZeroDivisionError):
            dtau *= 0.25
            continue
        if not np.all(np.isfinite(rn)):
            dtau *= 0.25
            continue
        new = float(np.max(np.abs(rn)))
        dtau = min(dtau * max(0.5, min(norm / max(new, 1e-300), 10.0)), 1e6)
        u, r, norm = u + du, rn, new
    return u, max_iter, False


def system_jacobian(system, y, bus: BusSignal, exclude_angle: bool = True):
    """Jacobian of the dynamic states with the bus eliminated.

    Uses the Schur complement ``f_y - f_z g_z^{-1} g_y`` of the central
    difference Jacobians.  Returns ``(J, index)`` where ``index`` lists the
    state slots of the rows and columns.
    """
    idx = np.array([i for i in system.dynamic_index if not (exclude_angle and i == 0)])
    rates = (bus.V_l_dot, bus.delta_l_dot)
    z0 = np.array([bus.V_l, bus.delta_l])
    y0 = np.array(y, dtype=float)

    def fy(v):
        yy = y0.copy()
        yy[idx] = v
        return system.f(yy, z0, rates)[idx]

    def gy(v):
        yy = y0.copy()
        yy[idx] = v
        return system.g(yy, z0, rates)

    A = finite_difference_jacobian(fy, y0[idx])
    B = finite_difference_jacobian(lambda z: system.f(y0, z, rates)[idx], z0)
    C = finite_difference_jacobian(gy, y0[idx])
    D = finite_difference_jacobian(lambda z: system.g(y0, z, rates), z0)
    return A - B @ np.linalg.solve(D, C), idx
