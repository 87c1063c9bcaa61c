"""Quantile hedging for two-asset options under shortfall-risk criteria.

Computes the minimal expected shortfall achievable with a given initial
capital (phi1) and the cheapest capital achieving a given risk bound
(phi2) in a correlated two-asset Black-Scholes market, for linear and
power loss functions, by closed-form conditional quadrature with Monte
Carlo cross-checks.
"""

from .errors import (AssumptionViolatedError, DegenerateConditioningError,
                     DegenerateLawError, HeavyTailError,
                     InfeasibleInversionError, InvalidCorrelationError,
                     NanGuardError, OutOfRangeError, PayoffContractError,
                     ShortfallHedgeError, UnsupportedClosedFormError,
                     ValidationError)
from .gaussian import (ConditionalLaw, GaussianLaw, condition, conditional,
                       linear_transform, pdf, rect_upper_prob, sample)
from .market import (UNDER_P, UNDER_PTILDE, MarketParams, MeasureConstants,
                     derive_constants, radon_nikodym, terminal_price,
                     wiener_law)
from .mc import (DiscreteState, McConfig, VerifyReport, brute_force_np,
                 discretize, estimate, verify_risk)
from .payoffs import (CUSTOM, DIGITAL, KINDS, OUTPERFORMANCE,
                      QUANTO_DOMESTIC, QUANTO_FOREIGN, SPREAD, Payoff,
                      UniquenessReport, evaluate, uniqueness_check)
from .psi import (LINEAR, POWER, LossSpec, PsiPair, SpreadRegions, psi_linear,
                  psi_mc, psi_power, spread_region_boundary)
from .solver import (CurvePoint, RiskCurve, SolveConfig, curve, invert_psi1,
                     invert_psi2, phi1, phi2, price)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolatedError", "DegenerateConditioningError",
    "DegenerateLawError", "HeavyTailError", "InfeasibleInversionError",
    "InvalidCorrelationError", "NanGuardError", "OutOfRangeError",
    "PayoffContractError", "ShortfallHedgeError",
    "UnsupportedClosedFormError", "ValidationError",
    "ConditionalLaw", "GaussianLaw", "condition", "conditional",
    "linear_transform", "pdf", "rect_upper_prob", "sample",
    "UNDER_P", "UNDER_PTILDE", "MarketParams", "MeasureConstants",
    "derive_constants", "radon_nikodym", "terminal_price", "wiener_law",
    "DiscreteState", "McConfig", "VerifyReport", "brute_force_np",
    "discretize", "estimate", "verify_risk",
    "CUSTOM", "DIGITAL", "KINDS", "OUTPERFORMANCE", "QUANTO_DOMESTIC",
    "QUANTO_FOREIGN", "SPREAD", "Payoff", "UniquenessReport", "evaluate",
    "uniqueness_check",
    "LINEAR", "POWER", "LossSpec", "PsiPair", "SpreadRegions", "psi_linear",
    "psi_mc", "psi_power", "spread_region_boundary",
    "CurvePoint", "RiskCurve", "SolveConfig", "curve", "invert_psi1",
    "invert_psi2", "phi1", "phi2", "price",
    "__version__",
]
