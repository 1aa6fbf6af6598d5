"""Optimal leverage for a two-outcome stage return.

A miner holding mining assets ``M`` with equity ``E`` has leverage ``f = M/E``
and stage return on equity ``X = (1 - f) r + f W``. Its growth rate is
``E[log(1 + X)]``; this module maximizes it exactly for two-point ``W`` and also
provides the quadratic (Sharpe ratio) approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Tuple

from .core import (
    BalanceSheet,
    DegenerateStateError,
    Environment,
    InfeasibleLeverageError,
    ModelError,
    SingularConfigurationError,
    TwoPointReturn,
    ZERO_SHEET,
    make_balance_sheet,
)


def _branch_arguments(f: float, ret: TwoPointReturn, r: float) -> Tuple[float, float]:
    base = 1 + (1 - f) * r
    return base + f * ret.up, base + f * ret.down


def expected_log_payoff(f: float, ret: TwoPointReturn, r: float = 0.0) -> float:
    """``p log(1 + (1-f) r + f u) + (1-p) log(1 + (1-f) r + f d)``.

    Branches carrying zero probability are skipped. Raises
    ``InfeasibleLeverageError`` naming the branch whose log argument is not positive.
    """
    if not math.isfinite(f):
        raise ModelError(f"leverage must be finite, got {f!r}")
    up_arg, down_arg = _branch_arguments(f, ret, r)
    total = 0.0
    if ret.prob > 0:
        if up_arg <= 0:
            raise InfeasibleLeverageError("up", f, up_arg)
        total += ret.prob * math.log(up_arg)
    if ret.prob < 1:
        if down_arg <= 0:
            raise InfeasibleLeverageError("down", f, down_arg)
        total += (1 - ret.prob) * math.log(down_arg)
    return total


def feasible_upper_bound(ret: TwoPointReturn, r: float = 0.0) -> float:
    """Smallest ``f > 0`` at which a log argument hits zero (``inf`` if none)."""
    bounds = []
    for w in (ret.up, ret.down):
        if w < r:
            bounds.append((1 + r) / (r - w))
    return min(bounds) if bounds else math.inf


def _stationary_leverage(ret: TwoPointReturn, r: float) -> Tuple[float, bool]:
    a, b = ret.up - r, ret.down - r
    if a <= 0:
        # no branch beats the riskfree rate
        return 0.0, False
    if b >= 0:
        raise DegenerateStateError("riskless excess return: both outcomes beat the riskfree rate")
    excess = ret.mean - r
    f = -(1 + r) * excess / (a * b)
    if f <= 0:
        return 0.0, False
    bound = feasible_upper_bound(ret, r)
    if f >= bound:
        # only reachable when the downside has probability zero
        return bound, True
    return f, False


def f_max_exact(ret: TwoPointReturn, r: float = 0.0) -> float:
    """Exact maximizer of ``expected_log_payoff`` over ``f >= 0``.

    Closed form ``(1 + r)(mu - r) / ((u - r)(r - d))``. Zero when mining does
    not beat the riskfree rate; clamped to ``feasible_upper_bound`` when the
    downside is impossible (see ``solve_leverage`` for the flag).
    """
    return _stationary_leverage(ret, r)[0]


def mining_return(mining_assets: float, others: float, block_reward: float, unit_cost: float) -> TwoPointReturn:
    """Return rate over mining assets: ``u = B/M - c`` w.p. ``M/(M + M_-)``, else ``d = -c``."""
    if not mining_assets > 0:
        raise ModelError("mining_assets must be > 0 to define a return rate")
    if others < 0:
        raise ModelError("others' mining assets must be >= 0")
    p = mining_assets / (mining_assets + others)
    return TwoPointReturn(block_reward / mining_assets - unit_cost, -unit_cost, p)


def f_max_mining(mining_assets: float, others: float, block_reward: float,
                 unit_cost: float, r: float = 0.0) -> float:
    """Exact optimal leverage in mining parameters.

    ``M (r+1)((M + M_-)(c+r) - B) / ((M_- + M)(r+c)(M(r+c) - B))``, floored at 0.
    """
    M, Mo, B, c = mining_assets, others, block_reward, unit_cost
    if not (M > 0 and Mo >= 0):
        raise ModelError("need mining_assets > 0 and others >= 0")
    k = c + r
    if k <= 0:
        raise DegenerateStateError("zero cost and zero riskfree rate: leverage is unbounded")
    gap = M * k - B
    if gap == 0:
        raise SingularConfigurationError(
            f"M (r + c) = B at M={M!r}: winning exactly matches the riskfree return"
        )
    if gap > 0:
        return 0.0
    H = M + Mo
    f = M * (r + 1) * (H * k - B) / (H * k * gap)
    return max(f, 0.0)


def f_max_in_mean(mean: float, others: float, block_reward: float, unit_cost: float, r: float = 0.0) -> float:
    """The same optimum with ``M`` eliminated in favour of ``mu = B/(M + M_-) - c``."""
    B, Mo, c = block_reward, others, unit_cost
    return ((B - Mo * (mean + c)) * (r + 1) * (mean - r)
            / ((c + r) * (Mo * (mean + c) * (c + r) + B * (mean - r))))


def f_max_bound(mean: float, others: float, block_reward: float, unit_cost: float, r: float = 0.0) -> float:
    """Upper bound ``B (r+1)(mu - r) / (M_- c^3)`` valid for ``0 < r < mu``."""
    return block_reward * (r + 1) * (mean - r) / (others * unit_cost ** 3)


def f_star_approx(mean: float, variance: float, r: float = 0.0) -> Tuple[float, float]:
    """Quadratic approximations ``((mu-r)(1+r)/sigma^2, (mu-r)/sigma^2)``."""
    if not variance > 0:
        raise DegenerateStateError("zero variance: riskless return has no finite Kelly fraction")
    simple = (mean - r) / variance
    return simple * (1 + r), simple


def g_infinity(f: float, mean: float, variance: float, r: float = 0.0) -> float:
    """``r - r^2/2 + f (mu - r) - f^2 sigma^2 / 2``."""
    return r - r * r / 2 + f * (mean - r) - f * f * variance / 2


def annualize(log_rate: float, env: Environment) -> float:
    """Simple annual return from a per-interval log return (``block_interval`` in seconds)."""
    return math.expm1(log_rate * env.intervals_per_year)


@dataclass(frozen=True)
class LeverageSolution:
    f_exact: float
    f_approx: float
    f_simple: float
    expected_log_payoff_at_exact: float
    sharpe: float
    clamped: bool = False

    def payoff_at(self, which: Literal["exact", "approx", "simple"], ret: TwoPointReturn, r: float) -> float:
        f = {"exact": self.f_exact, "approx": self.f_approx, "simple": self.f_simple}[which]
        try:
            return expected_log_payoff(f, ret, r)
        except InfeasibleLeverageError:
            return -math.inf


def solve_leverage(ret: TwoPointReturn, r: float = 0.0) -> LeverageSolution:
    f, clamped = _stationary_leverage(ret, r)
    mean, var = ret.mean, ret.variance
    if var > 0:
        f_approx, f_simple = f_star_approx(mean, var, r)
        sharpe = (mean - r) / math.sqrt(var)
    else:
        f_approx = f_simple = f
        sharpe = math.copysign(math.inf, mean - r) if mean != r else math.nan
    return LeverageSolution(f, f_approx, f_simple, expected_log_payoff(f, ret, r), sharpe, clamped)


def optimal_balance_sheet(mining_assets: float, others: float, unit_cost: float, env: Environment,
                          method: Literal["exact", "approx", "simple"] = "exact") -> BalanceSheet:
    """Best financing of a fixed mining position against ``others`` of competing assets.

    ``method`` picks the leverage used: the exact maximizer (default) or one of
    the Sharpe-ratio approximants. Unprofitable positions give the zero sheet.
    """
    if mining_assets < 0:
        raise ModelError("mining_assets must be >= 0")
    if mining_assets == 0:
        return ZERO_SHEET
    ret = mining_return(mining_assets, others, env.block_reward, unit_cost)
    sol = solve_leverage(ret, env.riskfree_rate)
    f = {"exact": sol.f_exact, "approx": sol.f_approx, "simple": sol.f_simple}[method]
    if not f > 0:
        return ZERO_SHEET
    return make_balance_sheet(mining_assets, f)
