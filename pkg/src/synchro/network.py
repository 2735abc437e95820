"""Two-bus coupling: a machine feeding a constant-power load through a line.

The load bus voltage ``(V_l, delta_l)`` is algebraic.  Every system class in
this module exposes the same small protocol consumed by
:mod:`synchro.solver`:

* ``rhs(t, y)``: state derivative with the bus solved internally (explicit
  integrators);
* ``f(y, z, rates)`` and ``g(y, z, rates)``: derivative and bus residual
  for an explicit bus vector ``z = (V_l, delta_l)`` (implicit integrators);
* ``commit(t, y, z)``: bookkeeping after an accepted step;
* ``observe(y, z)``: recorded output signals.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _kernels as _kn
from .exceptions import AutotuneError, ApplicabilityError, ContractError, ConvergenceError, InfeasibleLoadError
from .models import (
    IDX, MANIFOLDS, N_STATES, BusSignal, HighOrderModel, SecondOrderState,
)
from .params import DerivedConstants, MachineParameters, derive_constants


@dataclass(frozen=True)
class LoadDemand:
    """Constant-power load; consumed power is positive."""

    P_L: float
    Q_L: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.P_L) and math.isfinite(self.Q_L)):
            raise ContractError("load powers must be finite")


class BusRates(NamedTuple):
    V_l_dot: float
    delta_l_dot: float
    valid: bool


def power_mismatch(V_l: float, delta_l: float, delta_s: float, I_q: float, I_d: float, load: LoadDemand):
    """Delivered minus demanded ``(P, Q)`` at the load bus."""
    th = delta_s - delta_l
    V_q, V_d = V_l * math.cos(th), V_l * math.sin(th)
    return V_q * I_q + V_d * I_d - load.P_L, V_d * I_q - V_q * I_d - load.Q_L


def solve_bus(load: LoadDemand, currents: Callable, guess: BusSignal, delta_s: float, *,
              tol: float = 1e-12, max_iter: int = 50, return_iterations: bool = False):
    """Newton solve for the bus voltage that makes the machine feed ``load``.

    ``currents(V_l, delta_l)`` returns the machine ``(I_q, I_d)`` for a
    candidate bus.  ``delta_s`` orients the rotor frame.  Derivative fields
    of ``guess`` are carried through unchanged.
    """
    V, dl = float(guess.V_l), float(guess.delta_l)

    def resid(V, dl):
        I_q, I_d = currents(V, dl)
        return np.array(power_mismatch(V, dl, delta_s, I_q, I_d, load))

    r = resid(V, dl)
    it = 0
    while np.max(np.abs(r)) >= tol:
        if it >= max_iter:
            raise InfeasibleLoadError("bus solve did not converge (load beyond deliverable range?)",
                                      residual=float(np.max(np.abs(r))), iterations=it)
        it += 1
        hV = 1e-7 * max(1.0, abs(V))
        hd = 1e-7 * max(1.0, abs(dl))
        J = np.column_stack([(resid(V + hV, dl) - r) / hV, (resid(V, dl + hd) - r) / hd])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise InfeasibleLoadError("singular bus Jacobian", residual=float(np.max(np.abs(r))), iterations=it) from exc
        lam = 1.0
        norm0 = np.max(np.abs(r))
        while True:
            Vn, dln = V + lam * step[0], dl + lam * step[1]
            if Vn > 0:
                rn = resid(Vn, dln)
                if np.all(np.isfinite(rn)) and (np.max(np.abs(rn)) < norm0 or lam < 1e-3):
                    break
            lam *= 0.5
            if lam < 1e-4:
                raise InfeasibleLoadError("bus solve line search failed", residual=float(norm0), iterations=it)
        V, dl, r = Vn, dln, rn
        if abs(step[0]) + abs(step[1]) < 1e-15 * (1 + abs(V) + abs(dl)):
            break
    bus = BusSignal(V, dl, guess.V_l_dot, guess.delta_l_dot)
    return (bus, it) if return_iterations else bus


def bus_derivatives(history, dt: float) -> BusRates:
    """Backward-difference rates from the newest uniformly spaced samples.

    ``history`` is a sequence of :class:`BusSignal` (or ``(V_l, delta_l)``
    pairs), oldest first.  With fewer than two samples the rates are zero
    and ``valid`` is False.
    """
    if dt <= 0:
        raise ContractError("dt must be positive")
    if len(history) < 2:
        return BusRates(0.0, 0.0, False)
    (V1, d1), (V0, d0) = tuple(history[-1])[:2], tuple(history[-2])[:2]
    return BusRates((V1 - V0) / dt, (d1 - d0) / dt, True)


# --------------------------------------------------------------------------
# systems


class TwoBusSystem:
    """Base class: a machine model coupled to a constant-power load bus."""

    kind = ""
    uses_rates = False

    def __init__(self, p: MachineParameters, load: LoadDemand, bus: Optional[BusSignal] = None):
        self.p = p
        self.load = load
        self.bus = bus if bus is not None else BusSignal(1.0, 0.0)
        self.rates = (0.0, 0.0)
        self._history = deque(maxlen=2)
        self._t_last = None
        self._theta = None
        self._refresh()

    # subclasses define n, dynamic_index, _currents, _derivative, _outputs
    def _refresh(self):
        pass

    def set_load(self, load: LoadDemand):
        self.load = load

    def set_vref(self, V_r: float):
        self.p = self.p.with_operating_point(V_r_s=V_r)
        self._refresh()

    def set_params(self, p: MachineParameters):
        self.p = p
        self._refresh()

    def reset_history(self):
        self._history.clear()
        self.rates = (0.0, 0.0)
        self._t_last = None

    def bus_signal(self, z, rates=None) -> BusSignal:
        r = self.rates if rates is None else rates
        return BusSignal(float(z[0]), float(z[1]), r[0], r[1])

    # protocol -----------------------------------------------------------
    def solve(self, y, guess: Optional[BusSignal] = None, rates=None) -> BusSignal:
        rr = self.rates if rates is None else rates
        if guess is None:
            # the load angle moves far less than either absolute angle
            theta = self._theta if self._theta is not None else 0.0
            g = BusSignal(self.bus.V_l, float(y[0]) - theta if self._theta is not None else self.bus.delta_l, rr[0], rr[1])
        else:
            g = BusSignal(guess.V_l, guess.delta_l, rr[0], rr[1])
        return solve_bus(self.load, lambda V, dl: self._currents(y, BusSignal(V, dl, rr[0], rr[1])), g, float(y[0]))

    def rhs(self, t, y):
        bus = self.solve(y)
        return self._derivative(y, bus)

    def f(self, y, z, rates=(0.0, 0.0)):
        return self._derivative(y, self.bus_signal(z, rates))

    def g(self, y, z, rates=(0.0, 0.0)):
        bus = self.bus_signal(z, rates)
        I_q, I_d = self._currents(y, bus)
        return np.array(power_mismatch(bus.V_l, bus.delta_l, float(y[0]), I_q, I_d, self.load))

    def fg(self, y, z, rates=(0.0, 0.0)):
        """``(f, g)`` from a single model evaluation."""
        bus = self.bus_signal(z, rates)
        dy, I_q, I_d = self._derivative_and_currents(y, bus)
        return dy, np.array(_kn.mismatch(bus.V_l, bus.delta_l, float(y[0]), I_q, I_d, self.load.P_L, self.load.Q_L))

    def _derivative_and_currents(self, y, bus):
        I_q, I_d = self._currents(y, bus)
        return self._derivative(y, bus), I_q, I_d

    def algebraic(self):
        return np.array([self.bus.V_l, self.bus.delta_l])

    def commit(self, t, y, z=None, dt=None):
        """Record an accepted point; returns the (possibly resolved) state."""
        if z is None:
            bus = self.solve(y)
        else:
            bus = self.bus_signal(z)
        self.bus = bus
        self._theta = float(y[0]) - bus.delta_l
        self._history.append((bus.V_l, bus.delta_l))
        if self.uses_rates and dt is not None and len(self._history) == 2:
            r = bus_derivatives(self._history, dt)
            self.rates = (r.V_l_dot, r.delta_l_dot)
        self._t_last = t
        return self._resolve(y, bus)

    def _resolve(self, y, bus):
        return y

    def observe(self, y, z=None):
        """``(V_s, I, P_e, V_l, delta_l)`` at a state."""
        bus = self.bus if z is None else self.bus_signal(z)
        V_s, I, P_e = self._outputs(y, bus)
        return V_s, I, P_e, bus.V_l, bus.delta_l

    def power_balance(self, y, z=None):
        """Machine terminal power, line loss and load power at a solved bus."""
        bus = self.bus if z is None else self.bus_signal(z)
        I_q, I_d = self._currents(y, bus)
        _, _, P_bus = self._outputs(y, bus)
        loss = self.p.R_e * (I_q * I_q + I_d * I_d)
        return P_bus + loss, loss, self.load.P_L


class HighOrderSystem(TwoBusSystem):
    kind = "high-order"

    def __init__(self, p, load, bus=None, network: str = "algebraic", floor: float = 1e-6):
        self.network = network
        self.floor = floor
        self.n = N_STATES
        super().__init__(p, load, bus)

    def _refresh(self):
        self.model = HighOrderModel(self.p, self.network, self.floor)
        self.dynamic_index = self.model.dynamic_index

    def _raw(self, y, bus):
        if self.p.V_r_s is None or self.p.P_c is None:
            raise ContractError("V_r_s and P_c must be set before evaluating the high-order model")
        return _kn.high_order_eval(np.asarray(y, dtype=float), float(bus.V_l), float(bus.delta_l),
                                   self.model._k, self.model._flags)

    def _currents(self, y, bus):
        aux = self._raw(y, bus)[2]
        return aux[0], aux[1]

    def _derivative(self, y, bus):
        return self._raw(y, bus)[0]

    def _derivative_and_currents(self, y, bus):
        dy, _, aux = self._raw(y, bus)
        return dy, aux[0], aux[1]

    def _resolve(self, y, bus):
        return self.model.resolve(y, bus)

    def _outputs(self, y, bus):
        _, aux = self.model.evaluate(y, bus)
        th = y[0] - bus.delta_l
        P_e = bus.V_l * (math.cos(th) * aux["I_q"] + math.sin(th) * aux["I_d"])
        return aux["V_s"], math.hypot(aux["I_q"], aux["I_d"]), P_e

    def evaluate(self, y, bus):
        return self.model.evaluate(y, bus)


class _PackedSystem(TwoBusSystem):
    """Second-order system evaluated by one compiled call per point."""

    def _eval(self, y, bus):
        raise NotImplementedError

    def f(self, y, z, rates=(0.0, 0.0)):
        return self._eval(y, self.bus_signal(z, rates))[:2].copy()

    def g(self, y, z, rates=(0.0, 0.0)):
        return self._eval(y, self.bus_signal(z, rates))[2:4].copy()

    def fg(self, y, z, rates=(0.0, 0.0)):
        out = self._eval(y, self.bus_signal(z, rates))
        return out[:2].copy(), out[2:4].copy()

    def _currents(self, y, bus):
        out = self._eval(y, bus)
        return out[4], out[5]

    def _derivative(self, y, bus):
        return self._eval(y, bus)[:2].copy()

    def _outputs(self, y, bus):
        out = self._eval(y, bus)
        th = y[0] - bus.delta_l
        P_e = bus.V_l * (math.cos(th) * out[4] + math.sin(th) * out[5])
        return out[6], math.hypot(out[4], out[5]), P_e


class ReducedSystem(_PackedSystem):
    """Elemental, damped or semi-damped second-order model."""

    def __init__(self, kind: str, p, load, bus=None):
        if kind not in MANIFOLDS:
            raise ContractError(f"unknown reduced model {kind!r}")
        self.kind = kind
        self.uses_rates = kind != "elemental"
        self.n = 2
        self.dynamic_index = np.array([0, 1])
        super().__init__(p, load, bus)

    def _refresh(self):
        if self.kind == "semi-damped" and not self.p.round_rotor:
            raise ApplicabilityError("the semi-damped model applies to round-rotor machines (X_q = X_d) only")
        self.c = derive_constants(self.p)
        self._code = _kn.KIND_CODES[self.kind]
        self._ready = self.p.V_r_s is not None and self.p.P_c is not None
        self._k = _kn.pack_reduced(self.p, self.c)

    def _eval(self, y, bus):
        if not self._ready:
            raise ContractError("V_r_s and P_c must be set before evaluating a reduced model")
        out = _kn.reduced_fg(self._code, float(y[0]), float(y[1]), float(bus.V_l), float(bus.delta_l),
                             float(bus.V_l_dot), float(bus.delta_l_dot), self._k, self.load.P_L, self.load.Q_L)
        if out[7] != _kn.OK:
            raise ConvergenceError("terminal-voltage loop did not converge", residual=math.nan, iterations=0)
        return out

    def reconstruct(self, y, bus):
        """Full fast-state reconstruction at a point."""
        return MANIFOLDS[self.kind](SecondOrderState(y[0], y[1]), bus, self.p, self.c)


class ClassicalSystem(_PackedSystem):
    """Constant ``E_0`` behind the transient reactance with frozen ``T_m0``."""

    kind = "classical"

    def __init__(self, p, load, E_0: float, T_m0: float, bus=None):
        self.n = 2
        self.dynamic_index = np.array([0, 1])
        self.E_0 = E_0
        self.T_m0 = T_m0
        super().__init__(p, load, bus)

    def _refresh(self):
        self.c = derive_constants(self.p, E_0=self.E_0)
        self._k = _kn.pack_reduced(self.p, self.c)

    def set_E0(self, E_0: float):
        self.E_0 = E_0
        self._refresh()

    def _eval(self, y, bus):
        return _kn.classical_fg(float(y[0]), float(y[1]), float(bus.V_l), float(bus.delta_l), self._k,
                                float(self.T_m0), self.load.P_L, self.load.Q_L)


def make_system(kind: str, p: MachineParameters, load: LoadDemand, bus: Optional[BusSignal] = None,
                **kwargs) -> TwoBusSystem:
    if kind == "high-order":
        return HighOrderSystem(p, load, bus, **kwargs)
    if kind == "classical":
        return ClassicalSystem(p, load, bus=bus, **kwargs)
    return ReducedSystem(kind, p, load, bus)


# --------------------------------------------------------------------------
# operating-point tuning


def high_order_guess(p: MachineParameters, load: LoadDemand) -> tuple:
    """Rough starting point for the high-order equilibrium Newton solve."""
    V = 1.0
    I = max(load.P_L, 1e-3) / V
    th = math.atan2(p.X_q + p.X_e, 1.0) * I * 0.8
    x = np.zeros(N_STATES)
    x[IDX["delta_s"]] = th
    x[IDX["omega_s"]] = p.omega0
    I_q, I_d = I * math.cos(th), I * math.sin(th)
    E_f = 1.0 + (p.X_d - 0.0) * I_d + 0.05
    x[IDX["E_qp"]] = E_f - (p.X_d - p.X_dp) * I_d
    x[IDX["E_dp"]] = (p.X_q - p.X_qp) * I_q
    x[IDX["Phi_q2"]] = -(p.X_q - p.X_k) * I_q
    x[IDX["Phi_d1"]] = -(p.X_d - p.X_k) * I_d + E_f
    x[IDX["E_f"]] = E_f
    x[IDX["U_f"]] = p.K_f * E_f
    P_c = p.P_c if p.P_c is not None else load.P_L + p.D0_tilde * p.omega0
    x[IDX["T_m"]] = x[IDX["P_u"]] = P_c
    return x, BusSignal(V, 0.0)


def autotune_vref(p: MachineParameters, c: Optional[DerivedConstants], load: LoadDemand, target_V_l: float = 1.0,
                  *, tune_P_c: bool = False, bracket=(0.5, 1.5), xtol: float = 1e-12, network: str = "algebraic"):
    """Regulator set point that puts the high-order equilibrium bus at ``target_V_l``.

    Scalar root-finding over ``V_r_s`` wrapped around the equilibrium solve.
    With ``tune_P_c`` the governor set point is solved jointly so that the
    equilibrium sits at nominal speed.  Returns ``(V_r_s, equilibrium)``
    where ``equilibrium`` is the :class:`synchro.solver.Equilibrium` found
    at the tuned set point.  ``c`` is accepted for interface symmetry.
    """
    from scipy.optimize import brentq

    from .solver import find_equilibrium

    state = {"x": None, "bus": None}

    def solve_at(V_r):
        pp = p.with_operating_point(V_r_s=V_r, P_c=p.P_c if p.P_c is not None else 0.0)
        system = HighOrderSystem(pp, load, network=network)
        if state["x"] is None:
            x0, b0 = high_order_guess(pp, load)
        else:
            x0, b0 = state["x"], state["bus"]
        eq = find_equilibrium(system, x0, b0, tune="P_c" if (tune_P_c or p.P_c is None) else None)
        state["x"], state["bus"] = eq.y, eq.bus
        return eq

    def f(V_r):
        return solve_at(V_r).bus.V_l - target_V_l

    lo, hi = bracket
    start = p.V_r_s if (p.V_r_s is not None and lo < p.V_r_s < hi) else target_V_l
    a, b = _bracket_root(f, start, lo, hi)
    V_r = brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    eq = solve_at(V_r)
    return V_r, eq


def _bracket_root(f, start, lo, hi):
    """Walk outward from ``start`` until ``f`` changes sign inside [lo, hi].

    Points where ``f`` cannot be evaluated (no equilibrium) end the walk in
    that direction.
    """
    try:
        f0 = f(start)
    except ConvergenceError as exc:
        raise AutotuneError(f"no equilibrium at V_r = {start}", residual=exc.residual, iterations=0) from exc
    if f0 == 0:
        return start, start
    best = abs(f0)
    step = 0.01
    left, right = (start, f0), (start, f0)
    open_l = open_r = True
    while open_l or open_r:
        for side in ("l", "r"):
            if side == "l" and open_l:
                x = max(lo, left[0] - step)
                try:
                    fx = f(x)
                except ConvergenceError:
                    open_l = False
                    continue
                best = min(best, abs(fx))
                if fx * f0 <= 0:
                    return x, left[0]
                left = (x, fx)
                open_l = x > lo
            elif side == "r" and open_r:
                x = min(hi, right[0] + step)
                try:
                    fx = f(x)
                except ConvergenceError:
                    open_r = False
                    continue
                best = min(best, abs(fx))
                if fx * f0 <= 0:
                    return right[0], x
                right = (x, fx)
                open_r = x < hi
        step *= 2
    raise AutotuneError(f"no V_r in [{lo}, {hi}] meets the bus-voltage target", residual=best, iterations=0)
