"""Sobol indices of kriging and multi-fidelity co-kriging surrogates, with uncertainty."""
from .design import InputDistribution, PickFreezeDesign, lhs, optimize_lhs, pick_freeze
from .errors import (
    ConditioningError,
    DegenerateOutputError,
    FitError,
    GPSobolError,
    InputError,
    RankDeficiencyError,
)
from .gp_path import GPPath, NystromBasis, sample_conditional
from .kernel import KernelSpec
from .kriging import KrigingModel, efficiency, fit
from .kriging_sobol import (
    IndexSampleMatrix,
    UncertaintyBudget,
    algorithm1,
    balance_m,
    budget,
    first_approach_estimate,
    mean_index,
    plugin_estimate,
    quantiles,
    var_mc,
    var_metamodel,
    var_total,
)
from .multifidelity import MultiFidelityModel, algorithm2_sample, mf_algorithm1, mf_first_approach, mf_fit

__version__ = "0.1.0"
