"""The one-shot mining lottery: winner draw, return moments and MGFs.

Exactly one player wins the block reward ``B`` with probability proportional to
its hash ``M_i / d_i``; every player pays ``c_j M_j / d_j`` regardless. The
compound version aggregates the lottery over a Poisson number of blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    BalanceSheet,
    DegenerateStateError,
    Environment,
    ModelError,
    RewardMoments,
    UndefinedMomentsError,
)

# exp() overflows a double above this
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True, eq=False)
class ProcessState:
    mining_assets: np.ndarray
    facility_prices: np.ndarray
    cost_rates: np.ndarray
    env: Environment

    def __post_init__(self):
        m = np.asarray(self.mining_assets, dtype=float).reshape(-1)
        d = np.broadcast_to(np.asarray(self.facility_prices, dtype=float), m.shape).copy()
        c = np.broadcast_to(np.asarray(self.cost_rates, dtype=float), m.shape).copy()
        if not (np.all(np.isfinite(m)) and np.all(m >= 0)):
            raise ModelError("mining assets must be finite and >= 0")
        if not np.all(d > 0):
            raise ModelError("facility prices must be > 0")
        if not np.all(c >= 0):
            raise ModelError("cost rates must be >= 0")
        for name, arr in (("mining_assets", m), ("facility_prices", d), ("cost_rates", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_sheets(cls, sheets: Sequence[BalanceSheet], env: Environment,
                    facility_prices=1.0, cost_rates=0.0) -> "ProcessState":
        return cls(np.array([s.mining_assets for s in sheets], dtype=float),
                   facility_prices, cost_rates, env)

    @property
    def hash_rates(self) -> np.ndarray:
        return self.mining_assets / self.facility_prices

    @property
    def total_hash(self) -> float:
        return float(self.hash_rates.sum())

    @property
    def stage_costs(self) -> np.ndarray:
        """Per-player cost paid every block, ``c_j M_j / d_j``."""
        return self.cost_rates * self.hash_rates

    @property
    def arrival_rate(self) -> float:
        """Block arrival rate ``lambda = (sum M_j/d_j) / D``."""
        total = self._checked_total()
        return total / self.env.difficulty_for(total)

    def _checked_total(self) -> float:
        total = self.total_hash
        if not total > 0:
            raise DegenerateStateError("no hash rate in play: all mining assets are zero")
        return total


def success_probabilities(state: ProcessState) -> np.ndarray:
    total = state._checked_total()
    return state.hash_rates / total


def _cumulative(p: np.ndarray) -> np.ndarray:
    cum = np.cumsum(p)
    cum[-1] = 1.0
    return cum


def draw_winners(cum_probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF winner lookup; a uniform on a boundary goes to the lower index."""
    return np.searchsorted(cum_probs, uniforms, side="left")


def sample_returns(state: ProcessState, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Sample the per-player return ``R`` (currency) of one or ``size`` lotteries.

    Returns shape ``(n_players,)`` or ``(size, n_players)``.
    """
    p = success_probabilities(state)
    cum = _cumulative(p)
    costs = state.stage_costs
    n = 1 if size is None else int(size)
    winners = draw_winners(cum, rng.random(n))
    out = np.broadcast_to(-costs, (n, len(p))).copy()
    out[np.arange(n), winners] += state.env.block_reward
    return out[0] if size is None else out


def return_moments(player_index: int, state: ProcessState) -> RewardMoments:
    """Mean, variance and Sharpe ratio of the return rate ``W_i = R_i / M_i``.

    With homogeneous prices this is ``E = B/H - c_i`` and
    ``V = B^2 M_{-i} / (M_i H^2)``.
    """
    m_i = float(state.mining_assets[player_index])
    if m_i <= 0:
        raise UndefinedMomentsError(f"player {player_index} holds no mining assets; W is undefined")
    p = float(success_probabilities(state)[player_index])
    B = state.env.block_reward
    unit_cost = float(state.cost_rates[player_index] / state.facility_prices[player_index])
    mean = p * B / m_i - unit_cost
    variance = p * (1 - p) * (B / m_i) ** 2
    return RewardMoments.from_mean_variance(mean, variance, state.env.riskfree_rate)


def expected_return(player_index: int, state: ProcessState) -> float:
    """``E[R_i] = p_i B - c_i M_i / d_i``."""
    p = success_probabilities(state)[player_index]
    return float(p * state.env.block_reward - state.stage_costs[player_index])


def return_variance(player_index: int, state: ProcessState) -> float:
    p = success_probabilities(state)[player_index]
    return float(p * (1 - p) * state.env.block_reward ** 2)


@dataclass(frozen=True)
class BreakEven:
    hash_level: float          # Y = B / c
    hash_level_riskfree: float  # Y' = B / (c + r)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.hash_level)


def break_even_hashrate(cost_rate: float, env: Environment) -> BreakEven:
    """Total hash at which mining stops paying. Zero cost gives ``Y = inf`` (flagged via ``is_infinite``)."""
    return BreakEven(env.break_even_hash(cost_rate), env.break_even_hash_riskfree(cost_rate))


def _single_parts(u: float, player_index: int, state: ProcessState):
    if not math.isfinite(u):
        raise ModelError(f"u must be finite, got {u!r}")
    p = float(success_probabilities(state)[player_index])
    cost = float(state.stage_costs[player_index])
    return p, u * state.env.block_reward, u * cost


def log_mgf_single(u: float, player_index: int, state: ProcessState) -> float:
    """Overflow-safe ``log E[exp(u R_i)]``."""
    p, uB, ucost = _single_parts(u, player_index, state)
    if p == 0:
        return -ucost
    if p == 1:
        return uB - ucost
    return float(np.logaddexp(math.log(p) + uB, math.log1p(-p))) - ucost


def mgf_single(u: float, player_index: int, state: ProcessState) -> float:
    """``(p e^{uB} + 1 - p) e^{-u c M / d}``; raises ``OverflowError`` past double range."""
    log_value = log_mgf_single(u, player_index, state)
    if log_value > _LOG_MAX:
        raise OverflowError(f"mgf_single overflows at u={u!r}; use log_mgf_single")
    return math.exp(log_value)


def _mgf_single_minus_one(u: float, player_index: int, state: ProcessState) -> float:
    # keeps full relative precision for |u| small, where the MGF is close to 1
    p, uB, ucost = _single_parts(u, player_index, state)
    if uB > _LOG_MAX:
        raise OverflowError(f"e^(uB) overflows at u={u!r}; use log_mgf_compound")
    return p * math.expm1(uB) * math.exp(-ucost) + math.expm1(-ucost)


def log_mgf_compound(u: float, player_index: int, state: ProcessState, horizon: float) -> float:
    """``T lambda (M_R(u) - 1)``, the log MGF of the summed return over ``[0, T]``."""
    rate = state.arrival_rate
    log_single = log_mgf_single(u, player_index, state)
    if log_single > _LOG_MAX:
        return math.inf
    if abs(log_single) < 1.0:
        return horizon * rate * _mgf_single_minus_one(u, player_index, state)
    return horizon * rate * math.expm1(log_single)


def mgf_compound(u: float, player_index: int, state: ProcessState, horizon: float) -> float:
    log_value = log_mgf_compound(u, player_index, state, horizon)
    if log_value > _LOG_MAX:
        raise OverflowError(f"mgf_compound overflows at u={u!r}; use log_mgf_compound")
    return math.exp(log_value)


def poisson_reward_rate(player_index: int, state: ProcessState) -> float:
    """Per-player block rate ``lambda_i = M_i / (D d_i)`` of the Poisson reward model."""
    total = state._checked_total()
    return float(state.hash_rates[player_index]) / state.env.difficulty_for(total)


def log_mgf_poisson_reward(u: float, player_index: int, state: ProcessState, horizon: float) -> float:
    if not math.isfinite(u):
        raise ModelError(f"u must be finite, got {u!r}")
    uB = u * state.env.block_reward
    if uB > _LOG_MAX:
        return math.inf
    return horizon * poisson_reward_rate(player_index, state) * math.expm1(uB)


def mgf_poisson_reward(u: float, player_index: int, state: ProcessState, horizon: float) -> float:
    """``exp(T lambda_i (e^{uB} - 1))``: revenue MGF when blocks arrive to player i as a Poisson process."""
    log_value = log_mgf_poisson_reward(u, player_index, state, horizon)
    if log_value > _LOG_MAX:
        raise OverflowError(f"mgf_poisson_reward overflows at u={u!r}; use log_mgf_poisson_reward")
    return math.exp(log_value)


def sample_poisson_reward(player_index: int, state: ProcessState, horizon: float,
                          rng: np.random.Generator, size: int) -> np.ndarray:
    """Direct draws of revenue ``B * N``, ``N ~ Poisson(T lambda_i)``."""
    lam = horizon * poisson_reward_rate(player_index, state)
    return state.env.block_reward * rng.poisson(lam, size=size).astype(float)
