"""Synchronous-machine models from a 19-state reference down to second order."""

from .exceptions import (
    ApplicabilityError, AutotuneError, ContractError, ConvergenceError, DivergenceError, DomainError,
    EquilibriumError, InfeasibleLoadError, FileError, ParameterError, SingularConstantError, StepFailureError, SynchroError,
)
from .models import (
    HIGH_ORDER_STATES, BusSignal, FastReconstruction, HighOrderModel, HighOrderState, SecondOrderState,
    classical_rhs, common_zero_order_manifolds, damped_manifolds, damped_rhs, elemental_manifolds, elemental_rhs,
    high_order_rhs, semi_damped_manifolds, semi_damped_rhs, stator_algebraic_currents, terminal_outputs,
)
from .network import LoadDemand, autotune_vref, bus_derivatives, make_system, solve_bus
from .params import (
    DerivedConstants, MachineParameters, derive_constants, dump_constants, dump_parameters, load_parameters,
    parse_parameters, table2, validate_parameters,
)
from .solver import (
    Equilibrium, Event, IntegratorConfig, Solution, find_equilibrium, finite_difference_jacobian, integrate,
    system_jacobian,
)
from .harness import (
    LoadEvent, RmseReport, Scenario, Trajectory, case1_scenario, case2_scenario, export_csv, load_scenario,
    read_csv, run_comparison, simulate,
)

__version__ = "0.1.0"
