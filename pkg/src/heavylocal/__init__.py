"""Heavy-tailed breakpoint distributions, generalized subexponential constants and
local asymptotics of random walk suprema, ruin probabilities and M/G/1 waiting times."""

__version__ = "0.1.0"

from .tailfn import ParameterError, PiecewiseTail, build_example, make_breakpoints, validate_params  # noqa: E402
from .distops import (DivergenceError, Exponential, from_dict, integrated_tail, power_tail,  # noqa: E402
                      shift, shift_to_satisfy_34, v1_min)
from .classify import classify_report, estimate_Cotimes, estimate_CT, estimate_Cstar, probe_points  # noqa: E402
from .supremum import (CompoundGeometric, LadderData, WalkModel, cg_local, cg_windows,  # noqa: E402
                       kesten_verify, ladder_analytic, ladder_lattice, ladder_mc, mc_supremum, theorem31_bounds)
from .apps import QueueModel, RiskModel, mg1_bounds, mg1_local, ruin_local, run_scenario  # noqa: E402

__all__ = [
    "ParameterError", "PiecewiseTail", "build_example", "make_breakpoints", "validate_params",
    "DivergenceError", "Exponential", "from_dict", "integrated_tail", "power_tail", "shift",
    "shift_to_satisfy_34", "v1_min", "classify_report", "estimate_Cotimes", "estimate_CT", "estimate_Cstar",
    "probe_points", "CompoundGeometric", "LadderData", "WalkModel", "cg_local", "cg_windows", "kesten_verify",
    "ladder_analytic", "ladder_lattice", "ladder_mc", "mc_supremum", "theorem31_bounds", "QueueModel",
    "RiskModel", "mg1_bounds", "mg1_local", "ruin_local", "run_scenario",
]
