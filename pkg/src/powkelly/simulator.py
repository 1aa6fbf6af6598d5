"""Monte Carlo engine for the repeated mining game and the coin-flip game.

Each stage: every player picks a balance sheet, the next block arrives after an
exponential wait with rate ``lambda = (sum M_j/d_j) / D``, one player wins ``B``,
everybody pays running costs and settles interest ``r (L - F)``. A player's
stage payoff is ``log(1 + (R - r (L - F)) / E)``.

Stage decisions never depend on realized rewards (growth-rate players react
only to the others' holdings), so the decision sequence is computed once per
scenario and shared by all trajectories. Trajectory ``k`` draws from its own
Philox stream keyed by the scenario seed with counter block ``k``; results do
not depend on how trajectories are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    BalanceSheet,
    DegenerateStateError,
    Environment,
    GrowthRate,
    InfeasibleLeverageError,
    ModelError,
    Scenario,
    Static,
    TwoPointReturn,
    ZERO_SHEET,
)
from .equilibrium import best_response
from .kelly import expected_log_payoff, f_max_mining, optimal_balance_sheet

EXOGENOUS = -1
_STATIONARY_RTOL = 1e-14


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(index), 0]))


@dataclass(frozen=True, eq=False)
class StageProfile:
    sheets: Tuple[BalanceSheet, ...]
    hash_rates: np.ndarray    # players followed by the exogenous holder
    cum_probs: np.ndarray
    rate: float
    win_payoff: np.ndarray    # log(1 + X) for each player if it wins
    lose_payoff: np.ndarray


def _common_price(scenario: Scenario) -> float:
    prices = {p.facility_price for p in scenario.players}
    if len(prices) == 1:
        return prices.pop()
    if any(not p.is_static for p in scenario.players):
        raise ModelError("growth-rate players need homogeneous facility prices")
    return 1.0


def initial_holding(player, env: Environment) -> float:
    """Holdings before the first stage.

    Free-choice growth players start at their standalone best response
    ``Y' / 3``; starting them at zero would make each believe it mines alone.
    """
    s = player.strategy
    if isinstance(s, Static):
        return s.sheet.mining_assets
    if s.mining_assets is not None:
        return s.mining_assets
    y = env.break_even_hash_riskfree(player.unit_cost)
    if not math.isfinite(y):
        raise ModelError(f"player {player.id}: zero cost and zero riskfree rate give an unbounded best response")
    return y / 3


class DecisionSchedule:
    """Per-stage balance sheets for every player, computed lazily.

    Stage ``k`` decisions of growth-rate players respond to the holdings chosen
    at stage ``k - 1`` (the initial holdings for ``k = 0``). Once holdings stop
    changing the last profile is reused for all later stages.
    """

    def __init__(self, scenario: Scenario, retarget_difficulty: bool = False):
        self.scenario = scenario
        self.retarget = retarget_difficulty
        self.env = scenario.environment
        self.price = _common_price(scenario)
        self.exogenous_hash = scenario.exogenous_hash / self.price
        self.profiles: List[StageProfile] = []
        self.stationary_from: Optional[int] = None
        self._difficulty: Optional[float] = None
        self._holdings = np.array([self._initial_holding(p) for p in scenario.players], dtype=float)
        self._last_inputs: Optional[np.ndarray] = None
        self.extend(1)
        if not self.profiles[0].hash_rates.sum() > 0:
            raise DegenerateStateError("no hash rate in play at the first stage")

    def _initial_holding(self, player) -> float:
        return initial_holding(player, self.env)

    def _decide(self, prev: np.ndarray) -> Tuple[BalanceSheet, ...]:
        env = self.env
        total_prev = prev.sum() + self.scenario.exogenous_hash
        sheets = []
        for j, player in enumerate(self.scenario.players):
            s = player.strategy
            if isinstance(s, Static):
                sheets.append(s.sheet)
                continue
            others = max(total_prev - prev[j], 0.0)
            if s.mining_assets is None:
                target = best_response(others, player.unit_cost, env)
                if not math.isfinite(target):
                    raise ModelError(f"player {player.id}: zero cost and zero riskfree rate give an unbounded best response")
            else:
                target = s.mining_assets
            if target <= 0:
                sheets.append(ZERO_SHEET)
            else:
                sheets.append(optimal_balance_sheet(target, others, player.unit_cost, env))
        return tuple(sheets)

    def _profile(self, sheets: Tuple[BalanceSheet, ...]) -> StageProfile:
        env = self.env
        players = self.scenario.players
        hashes = np.array([s.mining_assets / p.facility_price for s, p in zip(sheets, players)]
                          + [self.exogenous_hash])
        total = hashes.sum()
        if total > 0:
            if self._difficulty is None or self.retarget:
                d = env.difficulty_for(total)
                if self._difficulty is None:
                    self._difficulty = d
            else:
                d = self._difficulty
            rate = total / d
            probs = hashes / total
        else:
            rate = 0.0
            probs = np.zeros_like(hashes)
            probs[-1] = 1.0
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        win = np.zeros(len(players))
        lose = np.zeros(len(players))
        for j, (sheet, player) in enumerate(zip(sheets, players)):
            if sheet.equity <= 0:
                continue
            cost = player.cost_rate * sheet.mining_assets / player.facility_price
            interest = env.riskfree_rate * (sheet.liabilities - sheet.riskfree_assets)
            if player.liability_interest_credit:
                interest -= env.riskfree_rate * sheet.liabilities
            x_win = (env.block_reward - cost - interest) / sheet.equity
            x_lose = (-cost - interest) / sheet.equity
            for branch, x, prob in (("up", x_win, probs[j]), ("down", x_lose, 1 - probs[j])):
                if prob > 0 and 1 + x <= 0:
                    raise InfeasibleLeverageError(branch, sheet.leverage, 1 + x)
            win[j] = math.log1p(x_win) if x_win > -1 else -math.inf
            lose[j] = math.log1p(x_lose) if x_lose > -1 else -math.inf
        return StageProfile(sheets, hashes, cum, rate, win, lose)

    def extend(self, n: int) -> None:
        while len(self.profiles) < n and self.stationary_from is None:
            inputs = self._holdings
            if self._last_inputs is not None and np.allclose(inputs, self._last_inputs,
                                                             rtol=_STATIONARY_RTOL, atol=0.0):
                # same inputs reproduce the last profile from here on
                self.stationary_from = len(self.profiles) - 1
                break
            sheets = self._decide(inputs)
            self.profiles.append(self._profile(sheets))
            self._last_inputs = inputs
            self._holdings = np.array([s.mining_assets for s in sheets])

    def tables(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked ``(rates, win_payoff, lose_payoff)`` over the profiles built so far."""
        n = len(self.profiles)
        if getattr(self, "_tables_n", None) != n:
            self._tables = (np.array([p.rate for p in self.profiles]),
                            np.array([p.win_payoff for p in self.profiles]),
                            np.array([p.lose_payoff for p in self.profiles]))
            self._tables_n = n
        return self._tables

    def index(self, k: np.ndarray) -> np.ndarray:
        """Profile index used at stage(s) ``k``."""
        if self.stationary_from is None:
            self.extend(int(np.max(k)) + 1)
        last = len(self.profiles) - 1
        return np.minimum(k, last)

    def profile(self, k: int) -> StageProfile:
        return self.profiles[int(self.index(np.array([k]))[0])]

    @property
    def initial_rate(self) -> float:
        return self.profiles[0].rate


def stage_decisions(scenario: Scenario, n_stages: int, retarget_difficulty: bool = False) -> List[Tuple[BalanceSheet, ...]]:
    schedule = DecisionSchedule(scenario, retarget_difficulty)
    return [schedule.profile(k).sheets for k in range(n_stages)]


@dataclass(eq=False)
class Trajectory:
    stage_times: np.ndarray
    winners: np.ndarray                # player index, EXOGENOUS for the outside hash
    cumulative_log_payoff: np.ndarray  # per player
    initial_equity: np.ndarray
    payoff_sum_squares: np.ndarray
    wins: np.ndarray
    equity: Optional[np.ndarray] = None       # (stages + 1, players)
    stage_log_payoff: Optional[np.ndarray] = None

    @property
    def stages(self) -> int:
        return len(self.stage_times)

    def revenue(self, block_reward: float) -> np.ndarray:
        return block_reward * self.wins


def _simulate_one(schedule: DecisionSchedule, horizon: float, seed: int, index: int,
                  record_series: bool) -> Trajectory:
    rng = trajectory_rng(seed, index)
    n_players = len(schedule.scenario.players)
    exo_index = n_players
    chunk = int(schedule.initial_rate * horizon * 1.1 + 4 * math.sqrt(schedule.initial_rate * horizon) + 16)
    times_parts, winner_parts = [], []
    t = 0.0
    k0 = 0
    while True:
        ks = np.arange(k0, k0 + chunk)
        pidx = schedule.index(ks)
        rates = schedule.tables()[0][pidx]
        with np.errstate(divide="ignore"):
            gaps = rng.standard_exponential(chunk) / rates
        uniforms = rng.random(chunk)
        times = t + np.cumsum(gaps)
        keep = int(np.searchsorted(times, horizon, side="right"))
        if len(schedule.profiles) == 1:
            winners = np.searchsorted(schedule.profiles[0].cum_probs, uniforms[:keep], side="left")
        else:
            winners = np.empty(keep, dtype=np.int64)
            for pid in np.unique(pidx[:keep]):
                mask = pidx[:keep] == pid
                winners[mask] = np.searchsorted(schedule.profiles[pid].cum_probs, uniforms[:keep][mask],
                                                side="left")
        times_parts.append(times[:keep])
        winner_parts.append(winners)
        if keep < chunk:
            break
        t = times[-1]
        k0 += chunk
    times = np.concatenate(times_parts)
    winners = np.concatenate(winner_parts)
    n = len(times)
    pidx = schedule.index(np.arange(n)) if n else np.zeros(0, dtype=np.int64)
    _, win_tab, lose_tab = schedule.tables()
    is_win = winners[:, None] == np.arange(n_players)[None, :]
    payoff = np.where(is_win, win_tab[pidx], lose_tab[pidx])
    e0 = np.array([s.equity for s in schedule.profiles[0].sheets])
    cum = payoff.sum(axis=0)
    sumsq = (payoff * payoff).sum(axis=0)
    wins = is_win.sum(axis=0)
    winners = np.where(winners == exo_index, EXOGENOUS, winners)
    equity = series = None
    if record_series:
        equity = np.vstack([e0, e0 * np.exp(np.cumsum(payoff, axis=0))])
        series = payoff
    return Trajectory(times, winners, cum, e0, sumsq, wins, equity, series)


def _simulate_block(args) -> List[Trajectory]:
    scenario, retarget, start, stop, record_series = args
    schedule = DecisionSchedule(scenario, retarget)
    return [_simulate_one(schedule, scenario.horizon, scenario.seed, k, record_series)
            for k in range(start, stop)]


@dataclass(frozen=True)
class PlayerSummary:
    player_id: str
    stages: int
    mean_stage_log_payoff: float
    stage_log_payoff_se: float
    mean_total_log_payoff: float
    mean_revenue: float

    @property
    def ci95(self) -> Tuple[float, float]:
        half = 1.959963984540054 * self.stage_log_payoff_se
        return self.mean_stage_log_payoff - half, self.mean_stage_log_payoff + half


@dataclass(frozen=True)
class SimulationSummary:
    n_trajectories: int
    mean_stages: float
    stages_se: float
    initial_arrival_rate: float
    players: Tuple[PlayerSummary, ...]

    def player(self, player_id: str) -> PlayerSummary:
        for p in self.players:
            if p.player_id == player_id:
                return p
        raise KeyError(player_id)


@dataclass
class SimulationResult:
    trajectories: List[Trajectory]
    summary: SimulationSummary
    schedule: DecisionSchedule = field(repr=False)


def _summarize(scenario: Scenario, schedule: DecisionSchedule, trajs: Sequence[Trajectory]) -> SimulationSummary:
    n = len(trajs)
    counts = np.array([t.stages for t in trajs], dtype=float)
    total = counts.sum()
    stats = []
    for j, player in enumerate(scenario.players):
        s1 = float(sum(t.cumulative_log_payoff[j] for t in trajs))
        s2 = float(sum(t.payoff_sum_squares[j] for t in trajs))
        if total > 0:
            mean = s1 / total
            var = max(s2 / total - mean * mean, 0.0)
            se = math.sqrt(var / total) if total > 1 else math.nan
        else:
            mean = se = math.nan
        final = float(np.mean([t.cumulative_log_payoff[j] for t in trajs])) if n else math.nan
        revenue = float(np.mean([t.wins[j] for t in trajs])) * scenario.environment.block_reward if n else math.nan
        stats.append(PlayerSummary(player.id, int(total), mean, se, final, revenue))
    mean_stages = float(counts.mean()) if n else math.nan
    stages_se = float(counts.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return SimulationSummary(n, mean_stages, stages_se, schedule.initial_rate, tuple(stats))


def run_game(scenario: Scenario, n_trajectories: int, *, workers: int = 1,
                 retarget_difficulty: bool = False, record_series: bool = True) -> SimulationResult:
    """Simulate ``n_trajectories`` independent plays of the game over ``[0, horizon]``."""
    if n_trajectories < 0:
        raise ModelError("n_trajectories must be >= 0")
    schedule = DecisionSchedule(scenario, retarget_difficulty)
    if workers <= 1 or n_trajectories < 2:
        trajs = [_simulate_one(schedule, scenario.horizon, scenario.seed, k, record_series)
                 for k in range(n_trajectories)]
    else:
        bounds = np.linspace(0, n_trajectories, workers + 1).astype(int)
        jobs = [(scenario, retarget_difficulty, int(a), int(b), record_series)
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajs = [t for block in pool.map(_simulate_block, jobs) for t in block]
    return SimulationResult(trajs, _summarize(scenario, schedule, trajs), schedule)


# ---------------------------------------------------------------------------
# coin-flip game


@dataclass(frozen=True)
class CoinflipStats:
    final_wealth: np.ndarray
    median_wealth: float
    mean_log_wealth: float
    mean_log_growth: float
    log_growth_se: float


def run_coinflip(ret: TwoPointReturn, f: float, n_rounds: int, n_trajectories: int,
                 initial_wealth: float = 1000.0, seed: int = 0) -> CoinflipStats:
    """Bet a fixed fraction ``f`` of wealth on ``ret`` every round."""
    expected_log_payoff(f, ret)  # rejects infeasible fractions
    rng = np.random.default_rng(seed)
    wins = rng.random((n_trajectories, n_rounds)) < ret.prob
    step = np.where(wins, math.log1p(f * ret.up), math.log1p(f * ret.down))
    log_growth = step.sum(axis=1)
    final = initial_wealth * np.exp(log_growth)
    per_round = log_growth / n_rounds if n_rounds else np.zeros(n_trajectories)
    se = float(per_round.std(ddof=1) / math.sqrt(n_trajectories)) if n_trajectories > 1 else math.nan
    return CoinflipStats(final, float(np.median(final)), float(np.mean(np.log(initial_wealth) + log_growth)),
                         float(per_round.mean()), se)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepTemplate:
    """An entrant facing ``others`` of fixed competing mining assets."""

    env: Environment
    others: float
    unit_cost: float


@dataclass(frozen=True)
class SweepResult:
    p: np.ndarray
    f: np.ndarray
    log_payoff: np.ndarray

    @property
    def zero_crossing(self) -> float:
        """First grid ``p`` (after a profitable point) where the optimal leverage drops to 0."""
        positive = np.flatnonzero(self.f > 0)
        if not len(positive):
            return math.nan
        after = np.flatnonzero((self.f <= 0) & (np.arange(len(self.f)) > positive[0]))
        return float(self.p[after[0]]) if len(after) else math.nan

    @property
    def argmax(self) -> float:
        return float(self.p[int(np.argmax(self.log_payoff))])


def sweep_f_vs_p(template: SweepTemplate, p_grid: Sequence[float]) -> SweepResult:
    """Optimal leverage and growth rate for an entrant sized to win with probability ``p``."""
    p = np.asarray(p_grid, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ModelError("p grid must lie inside (0, 1)")
    env = template.env
    r = env.riskfree_rate
    fs = np.empty_like(p)
    payoffs = np.empty_like(p)
    for k, pk in enumerate(p):
        m = pk / (1 - pk) * template.others
        f = f_max_mining(m, template.others, env.block_reward, template.unit_cost, r)
        ret = TwoPointReturn(env.block_reward / m - template.unit_cost, -template.unit_cost, pk)
        fs[k] = f
        payoffs[k] = expected_log_payoff(f, ret, r)
    return SweepResult(p, fs, payoffs)


def template_from_scenario(scenario: Scenario, player_id: Optional[str] = None) -> SweepTemplate:
    """Entrant = ``player_id`` (default: first growth-rate player); everybody else is fixed."""
    players = scenario.players
    if player_id is None:
        growth = [p for p in players if isinstance(p.strategy, GrowthRate)]
        if not growth:
            raise ModelError("scenario has no growth-rate player to sweep")
        entrant = growth[0]
    else:
        entrant = players[scenario.player_index(player_id)]
    others = scenario.exogenous_hash + sum(
        initial_holding(p, scenario.environment) for p in players if p.id != entrant.id)
    if not others > 0:
        raise ModelError("sweep needs positive competing mining assets")
    return SweepTemplate(scenario.environment, others, entrant.unit_cost)


def final_log_wealth(trajectory: Trajectory, player: int) -> float:
    """``log E_T = log E_0 + sum of stage payoffs``; nan for a player that never held equity."""
    e0 = trajectory.initial_equity[player]
    if e0 <= 0:
        return math.nan
    return math.log(e0) + float(trajectory.cumulative_log_payoff[player])


def summary_rows(result: SimulationResult, player: int = 0) -> List[Dict[str, float]]:
    return [{"trajectory": k, "stages": t.stages, "final_log_wealth": final_log_wealth(t, player)}
            for k, t in enumerate(result.trajectories)]
