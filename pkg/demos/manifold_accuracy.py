"""How well the damped and semi-damped manifolds track E'_d under a ramp.

The q-axis damper pair is driven by a slow ramp in V_d and integrated to
its relaxed response.  The first-order (damped) and zero-order
(semi-damped) reconstructions of E'_d are compared as tau''_q shrinks:
the first-order error falls with tau''_q squared, the zero-order one
linearly.

    python demos/manifold_accuracy.py
"""

import math
from dataclasses import replace

from scipy.integrate import solve_ivp

from synchro import (
    BusSignal, SecondOrderState, damped_manifolds, derive_constants, semi_damped_manifolds, table2,
)


def relaxed_E_dp(p, theta, rate, T):
    """E'_d at time T with V_d = (1 + rate (t - T)) sin(theta), zero-order stator."""
    Xe = p.X_e
    Xqppe = p.X_qpp + Xe
    kq = p.X_qp - p.X_k
    a = (p.X_qp - p.X_qpp) / kq
    b = (p.X_qpp - p.X_k) / kq
    cq = (p.X_qp - p.X_qpp) / kq**2

    def f(t, x):
        Phi_q2, E = x
        I_q = (a * Phi_q2 - b * E + (1 + rate * (t - T)) * math.sin(theta)) / Xqppe
        dPhi = (-Phi_q2 - kq * I_q - E) / p.tau_q2pp
        dE = (-E + (p.X_q - p.X_qp) * (I_q - cq * (Phi_q2 + kq * I_q + E))) / p.tau_qp
        return [dPhi, dE]

    sol = solve_ivp(f, (0.0, T), [0.0, 0.0], method="Radau", rtol=1e-12, atol=1e-14)
    return sol.y[1, -1]


def main(theta=0.4, rate=0.01, T=60.0):
    base = table2().with_operating_point(V_r_s=1.0, P_c=0.05)
    print(f"{'scale':>6}{'first-order err':>18}{'zero-order err':>18}")
    previous = None
    for scale in (1.0, 0.5, 0.25):
        p = replace(base, tau_q2pp=base.tau_q2pp * scale)
        c = derive_constants(p)
        s = SecondOrderState(theta, p.omega0)
        bus = BusSignal(1.0, 0.0, rate, 0.0)
        exact = relaxed_E_dp(p, theta, rate, T)
        e1 = abs(damped_manifolds(s, bus, p, c).E_dp - exact)
        e0 = abs(semi_damped_manifolds(s, bus, p, c).E_dp - exact)
        line = f"{scale:>6g}{e1:>18.4e}{e0:>18.4e}"
        if previous:
            line += f"   ratios {previous[0] / e1:.3f}, {previous[1] / e0:.3f}"
        print(line)
        previous = (e1, e0)


if __name__ == "__main__":
    main()
