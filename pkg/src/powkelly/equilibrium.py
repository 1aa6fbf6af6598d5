"""Nash equilibrium of hash rates among Sharpe-maximizing (growth-rate) miners.

Each growth miner ``i`` best-responds with ``max(0, (Y'_i - M_-i) / 3)`` where
``Y'_i = B / (c_i + r)``. ``Z`` is hash held by exogenous (static) players.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConvergenceError, Environment, InfeasibleLeverageError, ModelError
from .kelly import expected_log_payoff, f_max_mining, mining_return

DOMINANCE_THRESHOLD = 0.5
DEFAULT_TOLERANCE = 1e-12
DEFAULT_MAX_ITER = 10**6


@dataclass(frozen=True)
class EquilibriumProblem:
    growth_costs: Sequence[float]
    exogenous_hash: float
    env: Environment

    def __post_init__(self):
        costs = tuple(float(c) for c in self.growth_costs)
        object.__setattr__(self, "growth_costs", costs)
        if not costs:
            raise ModelError("need at least one growth-rate player")
        if any(not (c >= 0 and math.isfinite(c)) for c in costs):
            raise ModelError("cost rates must be finite and >= 0")
        if any(c + self.env.riskfree_rate <= 0 for c in costs):
            raise ModelError("c + r must be > 0 for a finite break-even level")
        if not (self.exogenous_hash >= 0 and math.isfinite(self.exogenous_hash)):
            raise ModelError("exogenous hash must be finite and >= 0")

    @property
    def m(self) -> int:
        return len(self.growth_costs)

    @property
    def break_even(self) -> np.ndarray:
        """``Y'_i`` per growth player."""
        return self.env.block_reward / (np.asarray(self.growth_costs) + self.env.riskfree_rate)


@dataclass(frozen=True)
class EquilibriumResult:
    holdings: np.ndarray
    world_hash: float
    shares: np.ndarray
    support: frozenset
    payoff_per_stage: np.ndarray
    exogenous_hash: float = 0.0
    iterations: int = 0

    @property
    def exogenous_share(self) -> float:
        return self.exogenous_hash / self.world_hash if self.world_hash > 0 else 0.0


def best_response(others: float, cost_rate: float, env: Environment) -> float:
    """Sharpe-maximizing holdings ``max(0, (Y' - M_-) / 3)``; zero means exit."""
    if others < 0:
        raise ModelError("others' holdings must be >= 0")
    y = env.break_even_hash_riskfree(cost_rate)
    return max(0.0, (y - others) / 3)


def sharpe_of_holdings(holdings: float, others: float, cost_rate: float, env: Environment) -> float:
    """``(1 - (c + r)(M + M_-)/B) / sqrt(M_- / M)``."""
    k = cost_rate + env.riskfree_rate
    return (1 - k * (holdings + others) / env.block_reward) / math.sqrt(others / holdings)


def _stage_payoffs(holdings: np.ndarray, world: float, problem: EquilibriumProblem) -> np.ndarray:
    B, r = problem.env.block_reward, problem.env.riskfree_rate
    out = np.zeros(len(holdings))
    for i, m_i in enumerate(holdings):
        if m_i <= 0:
            continue
        others = max(world - m_i, 0.0)
        c = problem.growth_costs[i]
        f = f_max_mining(m_i, others, B, c, r)
        try:
            out[i] = expected_log_payoff(f, mining_return(m_i, others, B, c), r)
        except InfeasibleLeverageError:  # pragma: no cover - f_max lies inside the feasible set
            out[i] = math.nan
    return out


def _result(holdings: np.ndarray, problem: EquilibriumProblem, iterations: int = 0) -> EquilibriumResult:
    Z = problem.exogenous_hash
    world = float(holdings.sum() + Z)
    shares = holdings / world if world > 0 else np.zeros_like(holdings)
    support = frozenset(int(i) for i in np.flatnonzero(holdings > 0))
    holdings.setflags(write=False)
    shares.setflags(write=False)
    return EquilibriumResult(holdings, world, shares, support,
                             _stage_payoffs(holdings, world, problem), Z, iterations)


def _closed_form_on(active: np.ndarray, y: np.ndarray, Z: float) -> tuple:
    k = len(active)
    world = (y[active].sum() + 2 * Z) / (k + 2)
    return (y[active] - world) / 2, world


def equilibrium_closed_form(problem: EquilibriumProblem) -> EquilibriumResult:
    """Closed-form equilibrium with support restriction.

    On an active set of ``k`` players the world hash is
    ``(sum Y' + 2 Z) / (k + 2)`` and each holds ``(Y'_i - H) / 2``. Players with
    negative holdings are removed one at a time (most negative first) until all
    remaining holdings are nonnegative.
    """
    y = problem.break_even
    Z = problem.exogenous_hash
    active = np.arange(problem.m)
    while len(active):
        held, world = _closed_form_on(active, y, Z)
        worst = int(np.argmin(held))
        if held[worst] >= 0:
            break
        active = np.delete(active, worst)
    holdings = np.zeros(problem.m)
    world = Z
    if len(active):
        held, world = _closed_form_on(active, y, Z)
        holdings[active] = held
    excluded = np.setdiff1d(np.arange(problem.m), active)
    if np.any(y[excluded] > world * (1 + 1e-12)):
        raise RuntimeError("support restriction left out a player with a positive best response")
    return _result(holdings, problem)


def equilibrium_fixed_point(problem: EquilibriumProblem, tolerance: float = DEFAULT_TOLERANCE,
                            max_iter: int = DEFAULT_MAX_ITER, damping: Optional[float] = None) -> EquilibriumResult:
    """Iterated simultaneous best responses, started at ``Y'_i / 3``.

    Update: ``M <- max(0, M + w (BR(M) - M))`` with ``BR`` the unclamped best
    response. Undamped (``w = 1``) iteration has spectral radius ``(m-1)/3`` and
    diverges for five or more players, so the default ``w = min(1, 6/(m+4))``.
    Stops when the largest change is below ``tolerance`` relative to the holding
    (floored at ``1e-3 * max Y'`` for players heading to zero).
    """
    if not tolerance > 0:
        raise ModelError("tolerance must be > 0")
    y = problem.break_even
    Z = problem.exogenous_hash
    m = problem.m
    w = min(1.0, 6.0 / (m + 4)) if damping is None else float(damping)
    if not 0 < w <= 1:
        raise ModelError("damping must lie in (0, 1]")
    floor = float(y.max())
    x = y / 3
    for it in range(1, max_iter + 1):
        total = x.sum()
        unclamped = (y - (total - x) - Z) / 3
        new = np.maximum(0.0, x + w * (unclamped - x))
        change = np.abs(new - x)
        x = new
        if np.all(change <= tolerance * np.maximum(np.abs(x), floor * 1e-3)):
            return _result(x, problem, iterations=it)
        if not np.all(np.isfinite(x)):
            break
    raise ConvergenceError(f"best-response iteration did not converge in {max_iter} steps",
                           last_iterate=x.copy(), iterations=max_iter)


@dataclass(frozen=True)
class ShareReport:
    shares: np.ndarray
    dominant: np.ndarray
    in_support: np.ndarray


def equilibrium_shares(break_even: Sequence[float], world_hash: float) -> np.ndarray:
    """``M_i / H = (Y'_i / H - 1) / 2``, zero outside the support."""
    y = np.asarray(break_even, dtype=float)
    return np.maximum(0.0, 0.5 * (y / world_hash - 1))


def share_and_dominance(result: EquilibriumResult, costs: Sequence[float], env: Environment,
                        threshold: float = DOMINANCE_THRESHOLD) -> ShareReport:
    """Shares implied by cost rates at the equilibrium world hash, with majority flags.

    A share counts as dominant once it reaches ``threshold`` (to within 1e-9).
    """
    y = env.block_reward / (np.asarray(costs, dtype=float) + env.riskfree_rate)
    if result.world_hash > 0:
        shares = equilibrium_shares(y, result.world_hash)
    else:
        shares = np.zeros(len(y))
    in_support = np.array([i in result.support for i in range(len(y))])
    shares = np.where(in_support, shares, 0.0)
    return ShareReport(shares, shares >= threshold - 1e-9, in_support)


def dominance_cost_advantage(world_to_break_even: float) -> float:
    """Break-even ratio ``Y'_i / Y'_others`` needed for a 50% share when ``H = ratio * Y'_others``.

    A share of one half needs ``Y'_i = 2 H``.
    """
    return 2 * world_to_break_even

