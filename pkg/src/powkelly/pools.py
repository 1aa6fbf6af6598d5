"""Mining pools expressed as synthetic players.

Risk-sharing pools split the reward in proportion to mining assets and behave
like one player with the summed assets and the asset-weighted cost rate.
Risk-free-reward pools pay collaborators a fixed fee per unit of hash and carry
the reward risk themselves; they replicate a levered ordinary player that does
not pay interest on its liabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from .core import (
    BalanceSheet,
    Environment,
    GrowthRate,
    ModelError,
    PlayerSpec,
    RewardMoments,
    ZERO_SHEET,
)
from .kelly import optimal_balance_sheet


@dataclass(frozen=True)
class PoolMember:
    id: str
    mining_assets: float
    cost_rate: float

    @property
    def cost_amount(self) -> float:
        return self.mining_assets * self.cost_rate


@dataclass(frozen=True)
class RiskSharingPool:
    id: str
    member_ids: Tuple[str, ...]
    member_mining_assets: Tuple[float, ...]
    member_cost_rates: Tuple[float, ...]
    aggregate_mining_assets: float
    # sum of M_j c_j; kept so that nesting pools sums exactly the same terms
    cost_amount: float

    @property
    def mining_assets(self) -> float:
        return self.aggregate_mining_assets

    @property
    def aggregate_cost_rate(self) -> float:
        return self.cost_amount / self.aggregate_mining_assets

    cost_rate = aggregate_cost_rate

    @property
    def dividend_shares(self) -> np.ndarray:
        """Fraction of pool returns paid to each member, ``M_j / M_P``."""
        return np.asarray(self.member_mining_assets) / self.aggregate_mining_assets

    def as_player(self, facility_price: float = 1.0) -> PlayerSpec:
        return PlayerSpec(self.id, facility_price, self.aggregate_cost_rate,
                          GrowthRate(self.aggregate_mining_assets))

    def moments(self, outside_hash: float, env: Environment) -> RewardMoments:
        """``E[W_P] = B/H - c_P`` and ``V[W_P] = B^2 (H - M_P) / (M_P H^2)``."""
        M = self.aggregate_mining_assets
        H = M + outside_hash
        B = env.block_reward
        return RewardMoments.from_mean_variance(B / H - self.aggregate_cost_rate,
                                                B * B * (H - M) / (M * H * H), env.riskfree_rate)


Member = Union[PoolMember, RiskSharingPool]


def aggregate_risk_sharing(members: Sequence[Member], pool_id: str = "pool") -> RiskSharingPool:
    if not members:
        raise ModelError("a pool needs at least one member")
    total_m = 0.0
    total_cost = 0.0
    for mem in members:
        if not mem.mining_assets > 0:
            raise ModelError(f"pool member {mem.id} must hold mining assets > 0")
        total_m += mem.mining_assets
        total_cost += mem.cost_amount
    return RiskSharingPool(
        pool_id,
        tuple(m.id for m in members),
        tuple(float(m.mining_assets) for m in members),
        tuple(float(m.cost_rate) for m in members),
        total_m,
        total_cost,
    )


@dataclass(frozen=True)
class RiskFreeRewardPool:
    offered_cost_rate: float
    target_p: float
    collected_hash: float
    others: float
    sheet: BalanceSheet
    extra_revenue: float
    profitable: bool = True

    def as_player(self, pool_id: str = "risk-free-pool") -> PlayerSpec:
        return PlayerSpec(pool_id, 1.0, self.offered_cost_rate,
                          GrowthRate(self.collected_hash), liability_interest_credit=True)


def collected_hash(target_p: float, others: float) -> float:
    """Hash needed for success probability ``p``: ``p / (1 - p) * M_-``."""
    return target_p / (1 - target_p) * others


def build_risk_free_pool(target_p: float, others: float, offered_cost_rate: float,
                         env: Environment) -> RiskFreeRewardPool:
    """Size a risk-free-reward pool that wins with probability ``target_p``.

    Equity follows the optimal sheet for the collected hash at the offered fee;
    the pool borrows nothing, so it saves ``r L`` per stage compared with the
    replicating player. A fee that makes the position unprofitable yields the
    zero sheet with ``profitable=False``.
    """
    if not 0 < target_p < 1:
        raise ModelError("target_p must lie strictly between 0 and 1")
    if not offered_cost_rate > 0:
        raise ModelError("offered cost rate must be > 0")
    if not others > 0:
        raise ModelError("others' mining assets must be > 0")
    phi = collected_hash(target_p, others)
    sheet = optimal_balance_sheet(phi, others, offered_cost_rate, env)
    if sheet.is_zero:
        return RiskFreeRewardPool(offered_cost_rate, target_p, phi, others, ZERO_SHEET, 0.0, False)
    return RiskFreeRewardPool(offered_cost_rate, target_p, phi, others, sheet,
                              env.riskfree_rate * sheet.liabilities)


def simulate_pool_operator(pool: RiskFreeRewardPool, env: Environment, rng: np.random.Generator,
                           size: int) -> np.ndarray:
    """Per-stage log payoff of the operator from its own cash flows.

    The pool wins when the collaborators' hash finds the block, collects ``B``,
    pays the fee on every unit of collected hash, and earns interest on the part
    of its reserve not committed to mining.
    """
    if not pool.profitable:
        return np.zeros(size)
    win_prob = pool.collected_hash / (pool.collected_hash + pool.others)
    wins = rng.random(size) < win_prob
    fees = pool.offered_cost_rate * pool.collected_hash
    cash = np.where(wins, env.block_reward, 0.0) - fees + env.riskfree_rate * pool.sheet.riskfree_assets
    return np.log1p(cash / pool.sheet.equity)


def constant_elasticity_supply(scale: float, elasticity: float) -> Callable[[float], float]:
    """Hash supplied by collaborators at fee ``c``: ``scale * c ** elasticity``."""
    if not (scale > 0 and math.isfinite(elasticity)):
        raise ModelError("scale must be > 0 and elasticity finite")

    def supply(fee: float) -> float:
        return scale * fee ** elasticity

    return supply


def success_probability_from_supply(fee: float, supply: Callable[[float], float], others: float) -> float:
    phi = supply(fee)
    return phi / (phi + others)
