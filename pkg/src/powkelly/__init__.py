"""Kelly leverage, hash-rate equilibrium and Monte Carlo checks for proof-of-work miners."""

from .core import (
    BalanceSheet,
    ConvergenceError,
    DegenerateStateError,
    Environment,
    GrowthRate,
    InfeasibleLeverageError,
    ModelError,
    PlayerSpec,
    RewardMoments,
    Scenario,
    SingularConfigurationError,
    Static,
    TwoPointReturn,
    UndefinedMomentsError,
    ZERO_SHEET,
    make_balance_sheet,
    validate,
)

__version__ = "0.1.0"
