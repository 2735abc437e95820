"""Eigenvalues of the linearised reference model at the Case 1 operating point.

Each mode is listed with the two states that participate in it most, which
shows which dynamics are fast, which are slow and where the separation
between them is weak.

    python demos/eigen_structure.py
"""

import numpy as np

from synchro import LoadDemand, autotune_vref, system_jacobian, table2
from synchro.models import HIGH_ORDER_STATES
from synchro.network import HighOrderSystem


def main():
    V_r, eq = autotune_vref(table2(), None, LoadDemand(0.05), 1.0)
    p = eq.params.with_operating_point(V_r_s=V_r)
    J, idx = system_jacobian(HighOrderSystem(p, LoadDemand(0.05), eq.bus), eq.y, eq.bus)
    lam, right = np.linalg.eig(J)
    left = np.linalg.inv(right)
    part = np.abs(right * left.T)
    part /= part.sum(axis=0)

    print(f"V_r_s = {V_r:.9f}, P_c = {p.P_c:.9f}\n")
    print(f"{'eigenvalue':>26}   dominant states")
    for k in np.argsort(-lam.real):
        top = np.argsort(-part[:, k])[:2]
        names = ", ".join(f"{HIGH_ORDER_STATES[idx[i]]} {part[i, k]:.2f}" for i in top)
        print(f"{lam[k].real:>12.4g} {lam[k].imag:>+12.4g}j   {names}")


if __name__ == "__main__":
    main()
