import math

import numpy as np
import pytest

from synchro import BusSignal, ContractError, LoadDemand, autotune_vref, make_system, solve_bus, table2
from synchro.exceptions import InfeasibleLoadError
from synchro.models import HighOrderModel
from synchro.network import HighOrderSystem, bus_derivatives, power_mismatch


def test_open_circuit_bus():
    # no current drawn and no load: any voltage balances, the solve stays put
    bus, it = solve_bus(LoadDemand(0.0), lambda V, d: (0.0, 0.0), BusSignal(1.03, 0.2), 0.1,
                        return_iterations=True)
    assert it == 0
    assert (bus.V_l, bus.delta_l) == (1.03, 0.2)


def test_resistive_bus_by_hand():
    # the machine looks like a 1 pu source behind pure resistance r
    r, P = 0.5, 0.3

    def currents(V, d):
        # source aligned with the q-axis at delta_s = 0
        iq = (1.0 * 1.0 - V * math.cos(-d)) / r
        id_ = -(V * math.sin(-d)) / r
        return iq, id_

    bus = solve_bus(LoadDemand(P), currents, BusSignal(1.0, 0.0), 0.0)
    V = bus.V_l
    assert V * (1 - V) / r == pytest.approx(P, abs=1e-10)
    assert bus.delta_l == pytest.approx(0.0, abs=1e-10)


def test_tuned_bus_reconverges_immediately(tuned):
    p, eq = tuned
    model = HighOrderModel(p, "algebraic")

    def currents(V, d):
        return model.network_currents(eq.y, BusSignal(V, d))

    bus, it = solve_bus(LoadDemand(0.05), currents, eq.bus, eq.y[0], tol=1e-10, return_iterations=True)
    assert it <= 1
    assert bus.V_l == pytest.approx(1.0, abs=1e-9)


def test_infeasible_load_raises(tuned):
    p, eq = tuned
    model = HighOrderModel(p, "algebraic")
    with pytest.raises(InfeasibleLoadError):
        solve_bus(LoadDemand(50.0), lambda V, d: model.network_currents(eq.y, BusSignal(V, d)), eq.bus, eq.y[0])


def test_bus_derivatives():
    const = [BusSignal(1.0, 0.2)] * 3
    assert bus_derivatives(const, 1e-3) == (0.0, 0.0, True)
    ramp = [(1.0 + 0.1 * k * 1e-3, 0.0) for k in range(4)]
    rates = bus_derivatives(ramp, 1e-3)
    assert rates.V_l_dot == pytest.approx(0.1, abs=1e-9)
    assert bus_derivatives([BusSignal(1.0, 0.0)], 1e-3) == (0.0, 0.0, False)
    with pytest.raises(ContractError):
        bus_derivatives(const, 0.0)


def test_power_mismatch_by_hand():
    assert power_mismatch(1.0, 0.0, 0.0, 0.5, 0.0, LoadDemand(0.5)) == pytest.approx((0.0, 0.0))
    assert power_mismatch(1.0, 0.0, math.pi / 2, 0.0, 0.5, LoadDemand(0.0, 0.0)) == pytest.approx((0.5, 0.0))


def test_load_must_be_finite():
    with pytest.raises(ContractError):
        LoadDemand(math.nan)
    with pytest.raises(ContractError):
        LoadDemand(0.1, math.inf)


def test_autotune_heavier_load():
    V_r, eq = autotune_vref(table2(), None, LoadDemand(0.25), 1.0)
    assert eq.bus.V_l == pytest.approx(1.0, abs=1e-6)
    assert eq.params.P_c is not None


def test_vref_rises_with_load(tuned):
    p, eq = tuned
    lighter, _ = autotune_vref(table2(), None, LoadDemand(0.0), 1.0)
    heavier, _ = autotune_vref(table2(), None, LoadDemand(0.25), 1.0)
    V_mid = p.V_r_s
    assert lighter < V_mid < heavier


def test_power_balance_at_equilibrium(tuned):
    p, eq = tuned
    sys = HighOrderSystem(p, LoadDemand(0.05), eq.bus)
    P_e, loss, P_L = sys.power_balance(eq.y)
    assert P_e - loss == pytest.approx(P_L, abs=1e-9)


@pytest.mark.parametrize("kind", ["elemental", "damped", "semi-damped"])
def test_reduced_system_solves_its_bus(tuned, kind):
    p, eq = tuned
    sys = make_system(kind, p, LoadDemand(0.05), eq.bus)
    y = np.array(eq.y[:2])
    bus = sys.solve(y, eq.bus)
    V_s, I, P_e, V_l, dl = sys.observe(y, (bus.V_l, bus.delta_l))
    # outputs report the power arriving at the load bus
    assert P_e == pytest.approx(0.05, abs=1e-9)
    assert V_l == pytest.approx(1.0, abs=0.02)
