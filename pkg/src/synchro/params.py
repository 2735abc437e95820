"""Machine parameter records and the composite constants of the reduced models.

Parameter documents are flat ``key = value`` text with ``#`` comments; keys
are ASCII spellings of the machine symbols (``tau_qp``, ``X_dpp``, ...).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .exceptions import ParameterError, SingularConstantError


@dataclass(frozen=True)
class MachineParameters:
    """Per-unit machine, exciter, governor and line data.

    Time constants are in seconds, reactances and resistances in pu and
    ``omega0`` in electrical rad/s.  ``V_r_s`` (exciter reference) and
    ``P_c`` (governor power-change setting) may be ``None``, meaning "tune at
    the operating point" rather than a fixed value.
    """

    # damper windings
    tau_q2pp: float
    tau_d2pp: float
    tau_qp: float
    X_qpp: float
    X_qp: float
    X_q: float
    X_k: float
    # stator
    omega0: float
    R_s: float
    X_dpp: float
    X_dp: float
    # exciter
    tau_dp: float
    tau_f: float
    tau_u: float
    tau_u_bar: float
    X_d: float
    K_f: float
    K_u: float
    K_u_bar: float
    # governor / engine
    tau_1: float
    tau_2: float
    tau_3: float
    tau_4: float
    tau_5: float
    tau_6: float
    tau_m: float
    kappa: float
    M: float
    D0_tilde: float
    D0_bar: float
    # line
    R_e: float
    X_e: float
    # operating references
    V_r_s: Optional[float] = None
    P_c: Optional[float] = None

    @property
    def P_r_s(self) -> Optional[float]:
        """Governor power reference ``P_c + D0_bar * omega0``."""
        if self.P_c is None:
            return None
        return self.P_c + self.D0_bar * self.omega0

    @property
    def tau_a2(self) -> float:
        s = self.tau_5 + self.tau_6
        return self.tau_5 * self.tau_6 / s if s > 0 else 0.0

    @property
    def round_rotor(self) -> bool:
        return math.isclose(self.X_q, self.X_d, rel_tol=1e-12, abs_tol=0.0)

    def with_operating_point(self, V_r_s=None, P_c=None) -> "MachineParameters":
        """Copy with the exciter and/or governor references replaced."""
        changes = {}
        if V_r_s is not None:
            changes["V_r_s"] = float(V_r_s)
        if P_c is not None:
            changes["P_c"] = float(P_c)
        return replace(self, **changes)


OPTIONAL_KEYS = ("V_r_s", "P_c")
REQUIRED_KEYS = tuple(f.name for f in fields(MachineParameters) if f.name not in OPTIONAL_KEYS)
_TIME_CONSTANTS = (
    "tau_q2pp", "tau_d2pp", "tau_qp", "tau_dp", "tau_f", "tau_u", "tau_u_bar",
    "tau_1", "tau_2", "tau_3", "tau_4", "tau_5", "tau_6", "tau_m",
)


def parse_key_values(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines, returning ``{key: (raw_value, line_no)}``.

    Repeated keys are collected into a list of such tuples.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected 'key = value', got {raw!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParameterError(f"{source}:{lineno}: empty key", line=lineno)
        if key in out:
            prev = out[key]
            out[key] = (prev if isinstance(prev, list) else [prev]) + [(value, lineno)]
        else:
            out[key] = (value, lineno)
    return out


def _to_float(key, value, lineno, source):
    try:
        return float(value)
    except ValueError:
        raise ParameterError(
            f"{source}:{lineno}: value for '{key}' is not a number: {value!r}", field=key, line=lineno
        ) from None


def parse_parameters(text: str, source: str = "<string>") -> MachineParameters:
    entries = parse_key_values(text, source)
    values = {}
    for key, entry in entries.items():
        if isinstance(entry, list):
            raise ParameterError(f"{source}:{entry[-1][1]}: duplicate key '{key}'", field=key, line=entry[-1][1])
        value, lineno = entry
        if key == "P_r_s":
            continue
        if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
            raise ParameterError(f"{source}:{lineno}: unknown key '{key}'", field=key, line=lineno)
        values[key] = _to_float(key, value, lineno, source)
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ParameterError(f"{source}: missing required parameter(s): {', '.join(missing)}", field=missing[0])
    if "P_r_s" in entries:
        value, lineno = entries["P_r_s"]
        if "P_c" in values:
            raise ParameterError(f"{source}:{lineno}: give either P_c or P_r_s, not both", field="P_r_s", line=lineno)
        values["P_c"] = _to_float("P_r_s", value, lineno, source) - values["D0_bar"] * values["omega0"]
    return MachineParameters(**values)


def _asset_dir() -> Path:
    override = os.environ.get("SYNCHRO_SEED_DIR")
    if override:
        return Path(override)
    return Path(str(resources.files("synchro") / "data"))


def load_parameters(source: Union[str, os.PathLike]) -> MachineParameters:
    """Read a parameter document.

    ``source`` is a path, or the name ``"tableII"`` for the bundled data set
    (looked up under ``$SYNCHRO_SEED_DIR`` when that variable is set).
    """
    if str(source) in ("tableII", "table2"):
        path = _asset_dir() / "table2.txt"
    else:
        path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read parameter document {path}: {exc}") from exc
    return parse_parameters(text, str(path))


def table2() -> MachineParameters:
    return load_parameters("tableII")


def dump_parameters(p: MachineParameters) -> str:
    """Serialize to the key/value format; ``repr`` keeps floats bit-exact."""
    lines = []
    for f in fields(p):
        value = getattr(p, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


def validate_parameters(p: MachineParameters) -> list[str]:
    """Return a list of violated invariants; empty means the record is usable."""
    report = []
    for name in fields(p):
        v = getattr(p, name.name)
        if v is not None and not math.isfinite(v):
            report.append(f"{name.name} must be finite")
    for name in _TIME_CONSTANTS:
        if getattr(p, name) < 0:
            report.append(f"{name} >= 0")
    if not p.M > 0:
        report.append("M > 0")
    if not p.omega0 > 0:
        report.append("omega0 > 0")
    if not p.K_f > 0:
        report.append("K_f > 0")
    if not p.K_u > 0:
        report.append("K_u > 0")
    if not (p.X_k < p.X_qpp <= p.X_qp <= p.X_q):
        report.append("reactance ordering (q-axis): X_k < X_qpp <= X_qp <= X_q")
    if not (p.X_k < p.X_dpp <= p.X_dp <= p.X_d):
        report.append("reactance ordering (d-axis): X_k < X_dpp <= X_dp <= X_d")
    return report


@dataclass(frozen=True)
class DerivedConstants:
    """Composite constants of the elemental, damped and semi-damped models.

    Augmented reactances carry an ``_e`` suffix (machine reactance plus line
    reactance).  The damped and semi-damped constants are built with zero
    line and stator resistance; the elemental constants use the true
    ``R_s_e``.
    """

    R_s_e: float
    X_q_e: float
    X_d_e: float
    X_k_e: float
    X_qp_e: float
    X_dp_e: float
    X_qpp_e: float
    X_dpp_e: float
    # elemental
    C_r: float
    C_k: float
    C_x: float
    C_x_tilde: float
    # damped, q-axis
    C_qpp: float
    C_q_tilde: float
    C_qp: float
    C_qpp_tilde: float
    C_q: float
    # damped, d-axis
    C_dpp: float
    C_d_tilde: float
    C_dp: float
    C_dpp_tilde: float
    C_d: float
    # semi-damped
    C_qp_tilde: float
    # manifold polynomials
    N_q: float
    D_q: float
    N_qp: float
    D_q_tilde: float
    N_d: float
    D_d: float
    D_d_tilde: float
    # mechanical
    D0: float
    P_r_s: Optional[float]
    E_0: Optional[float] = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _nonzero(value, name):
    if value == 0 or not math.isfinite(value):
        raise SingularConstantError(f"{name} is zero; the manifold is singular", name=name)
    return value


def derive_constants(p: MachineParameters, E_0: Optional[float] = None) -> DerivedConstants:
    """Compute every composite constant used by the second-order models."""
    Xe = p.X_e
    R = p.R_s + p.R_e
    Xqe, Xde, Xke = p.X_q + Xe, p.X_d + Xe, p.X_k + Xe
    Xqpe, Xdpe = p.X_qp + Xe, p.X_dp + Xe
    Xqppe, Xdppe = p.X_qpp + Xe, p.X_dpp + Xe

    den = R * R + Xqe * Xde
    C_r = R / den
    C_x_tilde = Xqe / den
    C_k = p.K_u / p.K_f
    C_x = (p.X_d - p.X_q) / (Xqe * Xde)

    tq2, tq1 = p.tau_q2pp, p.tau_qp
    N_q = tq1 * tq2 * Xqpe * Xke * (p.X_q - p.X_qp) * (p.X_qp - p.X_qpp) * (p.X_qp - p.X_k)
    D_q = tq1 * Xqe * Xqpe**2 * (p.X_qp - p.X_k) ** 2 - tq2 * Xqe * Xke**2 * (p.X_q - p.X_qp) * (p.X_qp - p.X_qpp)
    _nonzero(D_q, "D_q")
    N_qp = tq1 * Xqpe**3 * (p.X_q - p.X_qp) * (p.X_qp - p.X_k) ** 2
    D_q_tilde = _nonzero(Xqe * D_q, "D_q_tilde")

    td2, td1 = p.tau_d2pp, p.tau_dp
    N_d = td1 * td2 * Xdpe * Xke * (p.X_d - p.X_dp) * (p.X_dp - p.X_dpp) * (p.X_dp - p.X_k)
    D_d = td1 * Xde * Xdpe**2 * (p.X_dp - p.X_k) ** 2 - td2 * Xde * Xke**2 * (p.X_d - p.X_dp) * (p.X_dp - p.X_dpp)
    _nonzero(D_d, "D_d")
    D_d_tilde = Xde * D_d

    C_qpp = tq2 * (p.X_qp - p.X_qpp) / Xqpe**2
    C_q_tilde = (p.X_q - p.X_qp) / D_q_tilde
    C_qp = tq1 * Xqpe * (p.X_qp - p.X_k)
    C_qpp_tilde = tq2 * Xqe * Xke * (p.X_qp - p.X_qpp) / Xqpe
    C_q = C_qpp + (C_qp + C_qpp_tilde) ** 2 * C_q_tilde

    C_dpp = td2 * (p.X_dp - p.X_dpp) / Xdpe**2
    C_d_tilde = (p.X_d - p.X_dp) / D_d_tilde
    C_dp = td1 * Xdpe * (p.X_dp - p.X_k)
    C_dpp_tilde = td2 * Xde * Xke * (p.X_dp - p.X_dpp) / Xdpe
    # E_qp sits on its zero-order manifold here, so only one factor of the
    # sub-transient share survives (unlike C_q)
    C_d = C_dpp + (C_dp + C_dpp_tilde) * C_dpp_tilde * C_d_tilde

    C_qp_tilde = tq1 * (p.X_q - p.X_qp) / Xqe**2

    return DerivedConstants(
        R_s_e=R, X_q_e=Xqe, X_d_e=Xde, X_k_e=Xke, X_qp_e=Xqpe, X_dp_e=Xdpe,
        X_qpp_e=Xqppe, X_dpp_e=Xdppe,
        C_r=C_r, C_k=C_k, C_x=C_x, C_x_tilde=C_x_tilde,
        C_qpp=C_qpp, C_q_tilde=C_q_tilde, C_qp=C_qp, C_qpp_tilde=C_qpp_tilde, C_q=C_q,
        C_dpp=C_dpp, C_d_tilde=C_d_tilde, C_dp=C_dp, C_dpp_tilde=C_dpp_tilde, C_d=C_d,
        C_qp_tilde=C_qp_tilde,
        N_q=N_q, D_q=D_q, N_qp=N_qp, D_q_tilde=D_q_tilde, N_d=N_d, D_d=D_d, D_d_tilde=D_d_tilde,
        D0=p.D0_bar + p.D0_tilde, P_r_s=p.P_r_s, E_0=E_0,
    )


def dump_constants(c: DerivedConstants) -> str:
    lines = []
    for key, value in c.as_dict().items():
        lines.append(f"{key} = {'unset' if value is None else repr(value)}")
    return "\n".join(lines) + "\n"
