"""Domain types shared by every module: environment, balance sheets, players.

Units: asset quantities are in currency. Hash rate is ``M / d`` where ``d`` is
the facility price; homogeneous scenarios use ``d = 1`` so mining assets and
hash rate coincide. Rates (``r``, ``c``) are per block interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

SECONDS_PER_YEAR = 365.25 * 24 * 3600
ACCOUNTING_RTOL = 1e-12


class ModelError(ValueError):
    """Base class for invalid model inputs or configurations."""


class DegenerateStateError(ModelError):
    """No hash rate in play, or a riskless configuration where a risky one is required."""


class UndefinedMomentsError(ModelError):
    pass


class InfeasibleLeverageError(ModelError):
    def __init__(self, branch: str, f: float, argument: float):
        self.branch = branch
        self.f = f
        self.argument = argument
        super().__init__(
            f"leverage f={f!r} is infeasible: {branch} branch log argument is {argument!r} <= 0"
        )


class SingularConfigurationError(ModelError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate=None, iterations: int = 0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


def _require_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ModelError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Environment:
    """Block reward ``B``, block interval ``tau``, riskfree rate ``r`` per interval.

    ``difficulty`` is optional; when omitted it is derived from the hash in play
    as ``tau * sum(M_j / d_j)`` so that blocks arrive every ``tau`` on average.
    """

    block_reward: float
    block_interval: float = 1.0
    riskfree_rate: float = 0.0
    difficulty: Optional[float] = None

    def __post_init__(self):
        _require_finite(block_reward=self.block_reward, block_interval=self.block_interval,
                        riskfree_rate=self.riskfree_rate)
        if self.block_reward <= 0:
            raise ModelError("block_reward must be > 0")
        if self.block_interval <= 0:
            raise ModelError("block_interval must be > 0")
        if self.riskfree_rate < 0:
            raise ModelError("riskfree_rate must be >= 0")
        if self.difficulty is not None and not (self.difficulty > 0 and math.isfinite(self.difficulty)):
            raise ModelError("difficulty must be finite and > 0")

    @property
    def intervals_per_year(self) -> float:
        """Number of block intervals in a 365.25-day year; ``block_interval`` in seconds."""
        return SECONDS_PER_YEAR / self.block_interval

    def difficulty_for(self, total_hash: float) -> float:
        if self.difficulty is not None:
            return self.difficulty
        return self.block_interval * total_hash

    def break_even_hash(self, cost_rate: float) -> float:
        """``Y = B / c``; infinite for a free miner."""
        if cost_rate < 0:
            raise ModelError("cost_rate must be >= 0")
        return math.inf if cost_rate == 0 else self.block_reward / cost_rate

    def break_even_hash_riskfree(self, cost_rate: float) -> float:
        """``Y' = B / (c + r)``, the break-even level net of the riskfree opportunity."""
        denom = cost_rate + self.riskfree_rate
        return math.inf if denom == 0 else self.block_reward / denom


def annual_to_interval_rate(annual_rate: float, block_interval_seconds: float) -> float:
    """Linear scaling ``r_tau = r_annual * tau / year``."""
    return annual_rate * block_interval_seconds / SECONDS_PER_YEAR


@dataclass(frozen=True)
class BalanceSheet:
    equity: float
    liabilities: float
    mining_assets: float
    riskfree_assets: float

    @property
    def leverage(self) -> float:
        """``M / E``; zero for the empty sheet."""
        if self.equity == 0:
            return 0.0
        return self.mining_assets / self.equity

    @property
    def is_zero(self) -> bool:
        return self.equity == 0 and self.liabilities == 0 and self.mining_assets == 0 and self.riskfree_assets == 0

    def check(self) -> "BalanceSheet":
        problem = validate(self)
        if problem is not None:
            raise ModelError(f"invalid balance sheet {self}: {problem}")
        return self


ZERO_SHEET = BalanceSheet(0.0, 0.0, 0.0, 0.0)


def validate(sheet: BalanceSheet) -> Optional[str]:
    """Return ``None`` if the sheet is valid, else the name of the first violated invariant.

    Checked in order: ``nonnegativity``, ``accounting identity`` (E + L = M + F),
    ``complementarity`` (L and F not both nonzero).
    """
    E, L, M, F = sheet.equity, sheet.liabilities, sheet.mining_assets, sheet.riskfree_assets
    if not all(math.isfinite(x) for x in (E, L, M, F)):
        return "nonnegativity: non-finite field"
    if min(E, L, M, F) < 0:
        return "nonnegativity"
    left, right = E + L, M + F
    if abs(left - right) > ACCOUNTING_RTOL * max(left, right, 1.0):
        return "accounting identity"
    if L != 0 and F != 0:
        return "complementarity"
    return None


def make_balance_sheet(mining_assets: float, leverage: float) -> BalanceSheet:
    """Build the sheet holding ``mining_assets`` at leverage ``M / E = leverage``.

    Leverage above 1 is financed by liabilities, below 1 leaves the excess equity
    in riskfree assets. Non-positive leverage (short selling or an unprofitable
    position) maps to the zero sheet.
    """
    _require_finite(mining_assets=mining_assets, leverage=leverage)
    if mining_assets < 0:
        raise ModelError("mining_assets must be >= 0")
    if leverage <= 0 or mining_assets == 0:
        return ZERO_SHEET
    equity = mining_assets / leverage
    if leverage > 1:
        return BalanceSheet(equity, mining_assets - equity, mining_assets, 0.0)
    return BalanceSheet(equity, 0.0, mining_assets, equity - mining_assets)


@dataclass(frozen=True)
class Static:
    sheet: BalanceSheet


@dataclass(frozen=True)
class GrowthRate:
    """Re-optimizes the balance sheet every stage.

    With ``mining_assets=None`` the player chooses its hash by best response to
    the others (full choice set). With a fixed value the choice is restricted to
    sheets holding exactly that much mining assets, and only the financing
    (leverage) is optimized.
    """

    mining_assets: Optional[float] = None


Strategy = Union[Static, GrowthRate]


@dataclass(frozen=True)
class PlayerSpec:
    id: str
    facility_price: float = 1.0
    cost_rate: float = 0.0
    strategy: Strategy = field(default_factory=GrowthRate)
    # pays no interest on its liabilities (risk-free-reward pool operator)
    liability_interest_credit: bool = False

    def __post_init__(self):
        _require_finite(facility_price=self.facility_price, cost_rate=self.cost_rate)
        if self.facility_price <= 0:
            raise ModelError(f"player {self.id}: facility_price must be > 0")
        if self.cost_rate < 0:
            raise ModelError(f"player {self.id}: cost_rate must be >= 0")
        if isinstance(self.strategy, Static):
            self.strategy.sheet.check()
        elif isinstance(self.strategy, GrowthRate):
            m = self.strategy.mining_assets
            if m is not None and not (m >= 0 and math.isfinite(m)):
                raise ModelError(f"player {self.id}: fixed mining_assets must be finite and >= 0")
        else:
            raise ModelError(f"player {self.id}: unknown strategy {self.strategy!r}")

    @property
    def is_static(self) -> bool:
        return isinstance(self.strategy, Static)

    @property
    def unit_cost(self) -> float:
        """Cost per unit of mining assets per interval, ``c / d``."""
        return self.cost_rate / self.facility_price


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    players: Sequence[PlayerSpec]
    exogenous_hash: float = 0.0
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        if not self.players:
            raise ModelError("scenario needs at least one player")
        if not (self.exogenous_hash >= 0 and math.isfinite(self.exogenous_hash)):
            raise ModelError("exogenous_hash must be finite and >= 0")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ModelError("horizon must be finite and > 0")
        if not (0 <= int(self.seed) < 2**64):
            raise ModelError("seed must fit in an unsigned 64-bit integer")
        ids = [p.id for p in self.players]
        if len(set(ids)) != len(ids):
            raise ModelError("player ids must be unique")

    def player_index(self, player_id: str) -> int:
        for k, p in enumerate(self.players):
            if p.id == player_id:
                return k
        raise KeyError(player_id)


@dataclass(frozen=True)
class TwoPointReturn:
    """Return rate taking ``up`` with probability ``prob`` and ``down`` otherwise."""

    up: float
    down: float
    prob: float

    def __post_init__(self):
        _require_finite(up=self.up, down=self.down, prob=self.prob)
        if not 0 <= self.prob <= 1:
            raise ModelError("prob must lie in [0, 1]")
        if not self.up > self.down:
            raise ModelError("up must exceed down")

    @property
    def mean(self) -> float:
        return self.prob * self.up + (1 - self.prob) * self.down

    @property
    def variance(self) -> float:
        return self.prob * (1 - self.prob) * (self.up - self.down) ** 2


@dataclass(frozen=True)
class RewardMoments:
    mean: float
    variance: float
    sharpe: float

    @classmethod
    def from_mean_variance(cls, mean: float, variance: float, riskfree_rate: float) -> "RewardMoments":
        excess = mean - riskfree_rate
        if variance > 0:
            sharpe = excess / math.sqrt(variance)
        elif excess == 0:
            sharpe = math.nan
        else:
            sharpe = math.copysign(math.inf, excess)
        return cls(mean, max(variance, 0.0), sharpe)
