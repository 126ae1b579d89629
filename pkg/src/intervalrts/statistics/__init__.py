from .diagnostics import GrowthReport, growth_diagnostic, write_growth_json
from .entropy import (
    FluctuationResult,
    L2Check,
    OWEstimate,
    Sigma2Estimate,
    first_returns_to_cylinders,
    fluctuation_test,
    fluctuation_values,
    l2_check,
    ow_entropy,
    sigma2_from_series,
    variance_sigma2,
)
from .gibbs import GibbsTrace, gibbs_trace, write_gibbs_csv
from .returns import (
    EmpiricalSurvival,
    Target,
    ball_target,
    bernoulli_cylinder_ks,
    bernoulli_cylinder_survival,
    cylinder_target,
    exponential_cdf,
    induced_return_comparison,
    is_periodic,
    ks_distance,
    ks_two_sample,
    return_stats,
    return_stats_many,
    write_rts_csv,
)

__all__ = [
    "EmpiricalSurvival",
    "FluctuationResult",
    "GibbsTrace",
    "GrowthReport",
    "L2Check",
    "OWEstimate",
    "Sigma2Estimate",
    "Target",
    "ball_target",
    "bernoulli_cylinder_ks",
    "bernoulli_cylinder_survival",
    "cylinder_target",
    "exponential_cdf",
    "first_returns_to_cylinders",
    "fluctuation_test",
    "fluctuation_values",
    "gibbs_trace",
    "growth_diagnostic",
    "induced_return_comparison",
    "is_periodic",
    "ks_distance",
    "ks_two_sample",
    "l2_check",
    "ow_entropy",
    "return_stats",
    "return_stats_many",
    "sigma2_from_series",
    "variance_sigma2",
    "write_gibbs_csv",
    "write_growth_json",
    "write_rts_csv",
]
