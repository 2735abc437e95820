"""Right-hand sides and manifold algebra for the five machine models.

The high-order model carries 19 states in the fixed order given by
``HIGH_ORDER_STATES``.  The four second-order models (classical, elemental,
damped, semi-damped) share the slow pair ``(delta_s, omega_s)`` and
reconstruct every fast state algebraically from it and the bus signal.

Angles are electrical radians, speeds electrical rad/s, everything else pu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as _kn
from .exceptions import ApplicabilityError, ContractError, ConvergenceError, DomainError, SingularConstantError
from .params import DerivedConstants, MachineParameters

HIGH_ORDER_STATES = (
    "delta_s", "omega_s",
    "Phi_q", "Phi_d", "E_dp", "E_qp", "Phi_q2", "Phi_d1", "Phi_q_e", "Phi_d_e",
    "E_f", "U_f", "U_f_bar", "T_m", "P_u", "P_a1", "P_a2", "P_b1", "P_b2",
)
IDX = {name: i for i, name in enumerate(HIGH_ORDER_STATES)}
N_STATES = len(HIGH_ORDER_STATES)
SLOW_STATES = ("delta_s", "omega_s")
NETWORK_STATES = ("Phi_q", "Phi_d", "Phi_q_e", "Phi_d_e")

MODEL_KINDS = ("high-order", "classical", "elemental", "damped", "semi-damped")
REDUCED_KINDS = MODEL_KINDS[1:]

# states that may be slaved to their own tau -> 0 limit, with the parameter
# holding their time constant (None: decided by the network option)
_QUASI_STATIC_CAPABLE = {
    "E_f": "tau_f",
    "U_f_bar": "tau_u_bar",
    "T_m": "tau_m",
    "P_a2": "tau_a2",
    "P_b2": "tau_2",
}
_STATE_TAU = {
    "Phi_q2": "tau_q2pp", "Phi_d1": "tau_d2pp", "E_dp": "tau_qp", "E_qp": "tau_dp",
    "U_f": "tau_u", "P_u": None, "P_a1": None, "P_b1": None, **_QUASI_STATIC_CAPABLE,
}

DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class HighOrderState:
    delta_s: float
    omega_s: float
    Phi_q: float
    Phi_d: float
    E_dp: float
    E_qp: float
    Phi_q2: float
    Phi_d1: float
    Phi_q_e: float
    Phi_d_e: float
    E_f: float
    U_f: float
    U_f_bar: float
    T_m: float
    P_u: float
    P_a1: float
    P_a2: float
    P_b1: float
    P_b2: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in HIGH_ORDER_STATES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "HighOrderState":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_STATES,):
            raise DomainError(f"high-order state must have {N_STATES} entries, got shape {x.shape}")
        return cls(*map(float, x))


class SecondOrderState(NamedTuple):
    delta_s: float
    omega_s: float


class BusSignal(NamedTuple):
    """Load-bus voltage magnitude/phase and their time derivatives."""

    V_l: float
    delta_l: float
    V_l_dot: float = 0.0
    delta_l_dot: float = 0.0


@dataclass
class FastReconstruction:
    """Algebraic estimates of the fast states plus terminal quantities.

    Fields left as NaN were not produced by the manifold set that built the
    record (for example the partial record of
    :func:`common_zero_order_manifolds`).
    """

    Phi_q: float = math.nan
    Phi_d: float = math.nan
    E_dp: float = math.nan
    E_qp: float = math.nan
    Phi_q2: float = math.nan
    Phi_d1: float = math.nan
    Phi_q_e: float = math.nan
    Phi_d_e: float = math.nan
    E_f: float = math.nan
    U_f: float = math.nan
    U_f_bar: float = math.nan
    T_m: float = math.nan
    P_u: float = math.nan
    P_a1: float = math.nan
    P_a2: float = math.nan
    P_b1: float = math.nan
    P_b2: float = math.nan
    I_q: float = math.nan
    I_d: float = math.nan
    V_q_s: float = math.nan
    V_d_s: float = math.nan
    V_s: float = math.nan

    @property
    def I(self) -> float:
        return math.hypot(self.I_q, self.I_d)

    def to_high_order(self, s: SecondOrderState) -> np.ndarray:
        """Stack the slow pair and the reconstructed fast states into a 19-vector."""
        out = np.empty(N_STATES)
        out[0], out[1] = s
        for name in HIGH_ORDER_STATES[2:]:
            out[IDX[name]] = getattr(self, name)
        return out


def _require(value, name):
    if value is None:
        raise ContractError(f"{name} is unset; tune the operating point first")
    return value


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise DomainError("non-finite input to model right-hand side")


# --------------------------------------------------------------------------
# high-order model


def quasi_static_states(p: MachineParameters, floor: float = DEFAULT_FLOOR, network: str = "dynamic") -> frozenset:
    """States whose own time constant is below ``floor`` and are slaved to it.

    With ``network="algebraic"`` the four stator/line flux states are also
    treated as quasi-static (their ``1/omega0`` derivative terms dropped).
    """
    if network not in ("dynamic", "algebraic"):
        raise ContractError(f"network must be 'dynamic' or 'algebraic', got {network!r}")
    chosen = set(NETWORK_STATES) if network == "algebraic" else set()
    for state, tau_name in _STATE_TAU.items():
        if tau_name is None:
            continue
        tau = getattr(p, tau_name)
        if tau < floor:
            if state not in _QUASI_STATIC_CAPABLE:
                raise ContractError(
                    f"{tau_name} = {tau:g} s is below the stiffness floor but {state} cannot be made quasi-static"
                )
            chosen.add(state)
    if "P_a2" in chosen and p.tau_5 + p.tau_6 <= 0:
        raise ContractError("tau_5 + tau_6 must be positive")
    if p.K_u_bar != 0 and p.tau_u_bar == 0:
        raise SingularConstantError("K_u_bar / tau_u_bar is singular with tau_u_bar = 0", name="tau_u_bar")
    if "P_b2" in chosen and p.tau_1 <= 0:
        raise ContractError("tau_1 must be positive")
    return frozenset(chosen)


class HighOrderModel:
    """Nineteen-state machine model bound to one parameter record.

    ``network="dynamic"`` integrates the stator and line flux linkages;
    ``"algebraic"`` solves them from the bus voltage each evaluation.
    """

    def __init__(self, p: MachineParameters, network: str = "dynamic", floor: float = DEFAULT_FLOOR,
                 quasi_static=None):
        self.p = p
        self.network = network
        self.floor = floor
        auto = quasi_static_states(p, floor, network)
        if quasi_static is not None:
            quasi_static = frozenset(quasi_static)
            unknown = quasi_static - set(_QUASI_STATIC_CAPABLE) - set(NETWORK_STATES)
            if unknown:
                raise ContractError(f"cannot make {sorted(unknown)} quasi-static")
            missing = auto - quasi_static
            if missing:
                raise ContractError(f"{sorted(missing)} are below the stiffness floor and must be quasi-static")
            if (quasi_static & set(NETWORK_STATES)) not in (frozenset(), frozenset(NETWORK_STATES)):
                raise ContractError("network flux states are quasi-static as a group or not at all")
            if (quasi_static & set(NETWORK_STATES)) and network != "algebraic":
                raise ContractError("quasi-static network fluxes require network='algebraic'")
            auto = quasi_static
        self.quasi_static = auto
        self.dynamic_index = np.array([i for i, n in enumerate(HIGH_ORDER_STATES) if n not in auto])
        self.algebraic_index = np.array([i for i, n in enumerate(HIGH_ORDER_STATES) if n in auto], dtype=int)

        if p.X_qpp + p.X_e <= 0 or p.X_dpp + p.X_e <= 0:
            raise SingularConstantError("augmented sub-transient reactance must be positive", name="X_pp_e")
        self._k, self._flags = _kn.pack_high_order(p, auto, network == "algebraic")

    def evaluate(self, x, bus: BusSignal, resolve: bool = True):
        """Return ``(dx, aux)``; ``aux`` holds currents, terminal voltage and
        (with ``resolve``) the state with quasi-static entries filled in."""
        if len(x) != N_STATES:
            raise DomainError(f"high-order state must have {N_STATES} entries")
        x = np.asarray(x, dtype=float)
        if not math.isfinite(float(x.sum()) + bus.V_l + bus.delta_l):
            raise DomainError("non-finite state or bus signal")
        _require(self.p.V_r_s, "V_r_s")
        _require(self.p.P_c, "P_c")
        dx, xr, a = _kn.high_order_eval(x, float(bus.V_l), float(bus.delta_l), self._k, self._flags)
        aux = {"I_q": a[0], "I_d": a[1], "V_q_s": a[2], "V_d_s": a[3], "V_s": a[4], "T_e": a[5]}
        if resolve:
            aux["x"] = xr
        return dx, aux

    def rhs(self, x, bus: BusSignal) -> np.ndarray:
        return self.evaluate(x, bus, resolve=False)[0]

    def resolve(self, x, bus: BusSignal) -> np.ndarray:
        """Copy of ``x`` with every quasi-static entry set to its slaved value."""
        return self.evaluate(x, bus)[1]["x"]

    def network_currents(self, x, bus: BusSignal):
        """Stator currents for a candidate bus (algebraic network only)."""
        _, aux = self.evaluate(x, bus)
        return aux["I_q"], aux["I_d"]


def high_order_rhs(x, bus: BusSignal, p: MachineParameters, *, network: str = "dynamic",
                   floor: float = DEFAULT_FLOOR, quasi_static=None) -> np.ndarray:
    """Time derivative of the 19-state model.

    States whose time constant falls below ``floor`` are replaced by the
    value that zeroes their own equation; their derivative entries are 0.
    """
    if isinstance(x, HighOrderState):
        x = x.to_array()
    return HighOrderModel(p, network, floor, quasi_static).rhs(x, bus)


def stator_algebraic_currents(x, p: MachineParameters):
    """Invert the combined-flux relations for ``(I_q, I_d)``.

    Uses ``Phi_q``, ``Phi_d``, ``Phi_q2``, ``Phi_d1``, ``E_dp`` and ``E_qp``
    from the high-order state.
    """
    if isinstance(x, HighOrderState):
        x = x.to_array()
    Xqppe = p.X_qpp + p.X_e
    Xdppe = p.X_dpp + p.X_e
    if Xqppe <= 0 or Xdppe <= 0:
        raise SingularConstantError("augmented sub-transient reactance is zero", name="X_pp_e")
    Phi_q, Phi_d, E_dp, E_qp, Phi_q2, Phi_d1 = (x[IDX[n]] for n in ("Phi_q", "Phi_d", "E_dp", "E_qp", "Phi_q2", "Phi_d1"))
    kq, kd = p.X_qp - p.X_k, p.X_dp - p.X_k
    I_q = (-Phi_q + (p.X_qp - p.X_qpp) / kq * Phi_q2 - (p.X_qpp - p.X_k) / kq * E_dp) / Xqppe
    I_d = (-Phi_d + (p.X_dp - p.X_dpp) / kd * Phi_d1 + (p.X_dpp - p.X_k) / kd * E_qp) / Xdppe
    return float(I_q), float(I_d)


# --------------------------------------------------------------------------
# zero-order manifolds


def common_zero_order_manifolds(s: SecondOrderState, p: MachineParameters, V_s: float) -> FastReconstruction:
    """Exciter and governor states shared by all three second-order models."""
    V_r = _require(p.V_r_s, "V_r_s")
    P_c = _require(p.P_c, "P_c")
    E_f = p.K_u * (V_r - V_s) / p.K_f
    if p.K_u_bar != 0:
        if p.tau_u_bar == 0:
            raise SingularConstantError("K_u_bar / tau_u_bar with tau_u_bar = 0", name="tau_u_bar")
        U_f_bar = p.K_u_bar / p.tau_u_bar * E_f
    else:
        U_f_bar = 0.0
    P_u = P_c - p.D0_bar * (s[1] - p.omega0)
    return FastReconstruction(
        E_f=E_f, U_f=p.K_f * E_f, U_f_bar=U_f_bar, T_m=P_u, P_u=P_u,
        P_a1=0.0, P_a2=0.0, P_b1=0.0, P_b2=0.0, V_s=V_s,
    )


def close_voltage_loop(a, b, C_k, V_r, guess, tol=1e-10, max_iter=100):
    """Solve ``V = a + b * C_k * (V_r - |V|)`` for the terminal voltage ``V``.

    ``a`` and ``b`` are the (q, d) terminal voltage at zero field voltage and
    its sensitivity to field voltage.  Relaxed fixed-point iteration is tried
    first; when it fails to contract, Newton on the two components takes
    over.  Returns ``(V_q, V_d, |V|)``.
    """
    Vq, Vd, V, status = _kn.voltage_loop(float(a[0]), float(a[1]), float(b[0]), float(b[1]),
                                         float(C_k), float(V_r), float(guess), tol, max_iter)
    _raise_status(status)
    return Vq, Vd, V


def _raise_status(status):
    if status == _kn.LOOP_ZERO:
        raise ConvergenceError("terminal-voltage loop hit |V| = 0", residual=math.inf, iterations=0)
    if status != _kn.OK:
        raise ConvergenceError("terminal-voltage loop did not converge", residual=math.nan, iterations=0)


def _angle_terms(s, bus):
    th = s[0] - bus.delta_l
    c, si = math.cos(th), math.sin(th)
    V = bus.V_l
    return th, V * c, V * si, c, si


def _packed(p, c):
    _require(p.V_r_s, "V_r_s")
    _require(p.P_c, "P_c")
    if p.K_u_bar != 0 and p.tau_u_bar == 0:
        raise SingularConstantError("K_u_bar / tau_u_bar with tau_u_bar = 0", name="tau_u_bar")
    return _kn.pack_reduced(p, c)


def _reconstruct(kind, s, bus, p, c, tol, max_iter):
    if kind == "semi-damped" and not p.round_rotor:
        raise ApplicabilityError("the semi-damped model applies to round-rotor machines (X_q = X_d) only")
    k = _packed(p, c)
    _check_finite(s[0], s[1], bus.V_l, bus.delta_l, bus.V_l_dot, bus.delta_l_dot)
    rec = np.empty(_kn.N_REC)
    status = _kn.reduced_reconstruct(_kn.KIND_CODES[kind], float(s[0]), float(s[1]), float(bus.V_l),
                                     float(bus.delta_l), float(bus.V_l_dot), float(bus.delta_l_dot),
                                     k, tol, max_iter, rec)
    _raise_status(status)
    return FastReconstruction(*rec.tolist())


def elemental_manifolds(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                        tol: float = 1e-10, max_iter: int = 100) -> FastReconstruction:
    """Zero-order manifolds of every fast state (true line/stator resistance)."""
    return _reconstruct("elemental", s, bus, p, c, tol, max_iter)


def damped_manifolds(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                     tol: float = 1e-10, max_iter: int = 100) -> FastReconstruction:
    """First-order damper manifolds plus zero-order manifolds for the rest.

    Built with zero stator and line resistance.  Every reconstructed
    quantity is affine in the field voltage, so the regulator loop closes on
    a scalar.
    """
    return _reconstruct("damped", s, bus, p, c, tol, max_iter)


def semi_damped_manifolds(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                          tol: float = 1e-10, max_iter: int = 100) -> FastReconstruction:
    """First-order manifold for ``E_dp`` only (sub-transient dampers at zero order)."""
    return _reconstruct("semi-damped", s, bus, p, c, tol, max_iter)


# --------------------------------------------------------------------------
# second-order right-hand sides


def classical_rhs(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                  T_m0: float) -> np.ndarray:
    """Constant voltage ``E_0`` behind the augmented transient reactance."""
    E_0 = _require(c.E_0, "E_0")
    _check_finite(s[0], s[1], bus.V_l, bus.delta_l, T_m0)
    P_e = E_0 / c.X_dp_e * bus.V_l * math.sin(s[0] - bus.delta_l)
    return np.array([s[1] - p.omega0, (T_m0 - P_e - p.D0_tilde * s[1]) / p.M])


def _reduced_rhs(kind, s, bus, p, c, rec):
    if rec is None:
        rec = MANIFOLDS[kind](s, bus, p, c)
    _require(c.P_r_s, "P_r_s")
    k = _packed(p, c)
    vec = np.array([getattr(rec, f) for f in _kn.REC_FIELDS])
    acc = _kn.reduced_acceleration(_kn.KIND_CODES[kind], float(s[0]), float(s[1]), float(bus.V_l),
                                   float(bus.delta_l), float(bus.V_l_dot), float(bus.delta_l_dot), k, vec)
    return np.array([s[1] - p.omega0, acc])


def elemental_rhs(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                  rec: Optional[FastReconstruction] = None) -> np.ndarray:
    return _reduced_rhs("elemental", s, bus, p, c, rec)


def damped_rhs(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
               rec: Optional[FastReconstruction] = None) -> np.ndarray:
    return _reduced_rhs("damped", s, bus, p, c, rec)


def semi_damped_rhs(s: SecondOrderState, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                    rec: Optional[FastReconstruction] = None) -> np.ndarray:
    if not p.round_rotor:
        raise ApplicabilityError("the semi-damped model applies to round-rotor machines (X_q = X_d) only")
    return _reduced_rhs("semi-damped", s, bus, p, c, rec)


# --------------------------------------------------------------------------
# terminal quantities


def classical_currents(s: SecondOrderState, bus: BusSignal, c: DerivedConstants):
    """Currents of ``E_0`` (on the q-axis at ``delta_s``) behind ``X_dp_e``."""
    E_0 = _require(c.E_0, "E_0")
    _, vc, vs, _, _ = _angle_terms(s, bus)
    return vs / c.X_dp_e, (E_0 - vc) / c.X_dp_e


MANIFOLDS = {
    "elemental": elemental_manifolds,
    "damped": damped_manifolds,
    "semi-damped": semi_damped_manifolds,
}
RHS = {
    "elemental": elemental_rhs,
    "damped": damped_rhs,
    "semi-damped": semi_damped_rhs,
}


def terminal_outputs(kind: str, s, bus: BusSignal, p: MachineParameters, c: DerivedConstants,
                     network: str = "algebraic"):
    """Terminal voltage magnitude, current magnitude and power delivered to the bus.

    For ``kind="high-order"`` ``s`` is the full 19-state vector.
    """
    if kind == "high-order":
        _, aux = HighOrderModel(p, network).evaluate(np.asarray(s, dtype=float), bus)
        I_q, I_d, V_s = aux["I_q"], aux["I_d"], aux["V_s"]
        th = s[0] - bus.delta_l
    elif kind == "classical":
        I_q, I_d = classical_currents(s, bus, c)
        th = s[0] - bus.delta_l
        V_s = math.hypot(bus.V_l * math.cos(th) + p.X_e * I_d, bus.V_l * math.sin(th) - p.X_e * I_q)
    elif kind in MANIFOLDS:
        rec = MANIFOLDS[kind](s, bus, p, c)
        I_q, I_d, V_s = rec.I_q, rec.I_d, rec.V_s
        th = s[0] - bus.delta_l
    else:
        raise ContractError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    P_e = bus.V_l * (math.cos(th) * I_q + math.sin(th) * I_d)
    return V_s, math.hypot(I_q, I_d), P_e


def fast_state_residuals(x, bus: BusSignal, p: MachineParameters) -> dict:
    """Right-hand sides of the fast equations with every small parameter at zero.

    Each entry is the bracket that multiplies out of ``tau * d/dt state``
    (stator equations with ``omega/omega0 = 1``).  A zero-order manifold
    zeroes all of them.
    """
    x = np.asarray(x, dtype=float)
    g = {n: x[IDX[n]] for n in HIGH_ORDER_STATES}
    I_q, I_d = stator_algebraic_currents(x, p)
    th = g["delta_s"] - bus.delta_l
    vc, vs = bus.V_l * math.cos(th), bus.V_l * math.sin(th)
    R = p.R_s + p.R_e
    kq, kd = p.X_qp - p.X_k, p.X_dp - p.X_k
    cq = (p.X_qp - p.X_qpp) / kq**2
    cd = (p.X_dp - p.X_dpp) / kd**2
    V_qs = p.R_e * I_q - g["Phi_d_e"] + vc
    V_ds = p.R_e * I_d + g["Phi_q_e"] + vs
    V_s = math.hypot(V_qs, V_ds)
    rate_gain = p.K_u_bar / p.tau_u_bar if p.K_u_bar != 0 else 0.0
    return {
        "Phi_q": -g["Phi_d"] + vc + R * I_q,
        "Phi_d": g["Phi_q"] + vs + R * I_d,
        "Phi_q_e": g["Phi_q_e"] + p.X_e * I_q,
        "Phi_d_e": g["Phi_d_e"] + p.X_e * I_d,
        "E_dp": -g["E_dp"] + (p.X_q - p.X_qp) * (I_q - cq * (g["Phi_q2"] + kq * I_q + g["E_dp"])),
        "E_qp": -g["E_qp"] - (p.X_d - p.X_dp) * (I_d - cd * (g["Phi_d1"] + kd * I_d - g["E_qp"])) + g["E_f"],
        "Phi_q2": -g["Phi_q2"] - kq * I_q - g["E_dp"],
        "Phi_d1": -g["Phi_d1"] - kd * I_d + g["E_qp"],
        "E_f": -p.K_f * g["E_f"] + g["U_f"],
        "U_f": (-g["U_f"] + p.K_u * g["U_f_bar"] - p.K_u * rate_gain * g["E_f"] + p.K_u * (p.V_r_s - V_s)),
        "U_f_bar": -g["U_f_bar"] + rate_gain * g["E_f"],
        "T_m": -g["T_m"] + g["P_u"],
        "P_u": g["P_a1"] + p.tau_4 * g["P_a2"],
        "P_a1": g["P_a2"],
        "P_a2": -(g["P_a1"] - p.kappa * (g["P_b1"] + p.tau_3 * g["P_b2"])) / (p.tau_5 + p.tau_6) - g["P_a2"],
        "P_b1": g["P_b2"],
        "P_b2": ((p.P_c - g["P_u"]) / (p.D0_bar * p.omega0) - (g["omega_s"] - p.omega0) / p.omega0
                 - g["P_b1"]) / p.tau_1 - g["P_b2"],
    }
