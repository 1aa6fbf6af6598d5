"""Ready-made inputs: a Bitcoin-sized small miner and the 23%/20% coin flip."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Environment, GrowthRate, PlayerSpec, Scenario, Static, TwoPointReturn, make_balance_sheet
from .kelly import (
    annualize,
    expected_log_payoff,
    f_star_approx,
    g_infinity,
    mining_return,
    solve_leverage,
)

BTC_PRICE_USD = 9500.0
BTC_PER_BLOCK = 12.5
NETWORK_HASH_THS = 1.1e8        # TH/s
MACHINE_HASH_THS = 73.0
MACHINE_PRICE_USD = 2200.0
COST_TO_BREAK_EVEN = 0.8
SMALL_MINER_P = 0.001
BLOCK_SECONDS = 600.0

COINFLIP = TwoPointReturn(0.23, -0.20, 0.5)


def bitcoin_environment() -> Environment:
    return Environment(BTC_PRICE_USD * BTC_PER_BLOCK, BLOCK_SECONDS, 0.0)


def bitcoin_others() -> float:
    """Network mining assets in USD: machines needed for the network hash times their price."""
    return NETWORK_HASH_THS / MACHINE_HASH_THS * MACHINE_PRICE_USD


def bitcoin_cost_rate() -> float:
    """Running cost per USD of machines per block, set at 80% of break-even."""
    return COST_TO_BREAK_EVEN * bitcoin_environment().block_reward / bitcoin_others()


def bitcoin_small_miner_assets(p: float = SMALL_MINER_P) -> float:
    return p / (1 - p) * bitcoin_others()


@dataclass(frozen=True)
class LeverageReport:
    """Leverage, financing and growth for one fixed mining position."""

    label: str
    leverage: float
    equity: float
    liabilities: float
    log_payoff: float
    annualized: float


@dataclass(frozen=True)
class BitcoinReport:
    mining_assets: float
    others: float
    cost_rate: float
    mean: float
    variance: float
    sharpe: float
    # Sharpe-ratio route: f = (mu - r)/sigma^2, growth S^2/2 from the quadratic expansion
    sharpe_route: LeverageReport
    # exact maximizer of the two-point expected log
    exact: LeverageReport
    # exact expected log evaluated at the Sharpe-ratio leverage
    exact_at_sharpe_leverage: float


def _report(label: str, f: float, m: float, log_payoff: float, env: Environment) -> LeverageReport:
    sheet = make_balance_sheet(m, f)
    return LeverageReport(label, f, sheet.equity, sheet.liabilities, log_payoff, annualize(log_payoff, env))


def bitcoin_report(p: float = SMALL_MINER_P) -> BitcoinReport:
    env = bitcoin_environment()
    others = bitcoin_others()
    c = bitcoin_cost_rate()
    m = bitcoin_small_miner_assets(p)
    r = env.riskfree_rate
    ret = mining_return(m, others, env.block_reward, c)
    mean, var = ret.mean, ret.variance
    _, f_simple = f_star_approx(mean, var, r)
    sol = solve_leverage(ret, r)
    quad = _report("sharpe", f_simple, m, g_infinity(f_simple, mean, var, r), env)
    exact = _report("exact", sol.f_exact, m, sol.expected_log_payoff_at_exact, env)
    return BitcoinReport(m, others, c, mean, var, (mean - r) / math.sqrt(var), quad, exact,
                         expected_log_payoff(f_simple, ret, r))


def bitcoin_scenario(horizon_seconds: float = 86400.0, seed: int = 0) -> Scenario:
    """The small miner as a fixed-hash growth player against the rest of the network held static."""
    env = bitcoin_environment()
    others = bitcoin_others()
    network = Static(make_balance_sheet(others, 1.0))
    players = [
        PlayerSpec("miner", 1.0, bitcoin_cost_rate(), GrowthRate(bitcoin_small_miner_assets())),
        PlayerSpec("network", 1.0, bitcoin_cost_rate(), network),
    ]
    return Scenario(env, players, 0.0, horizon_seconds, seed)


@dataclass(frozen=True)
class CoinflipReport:
    f_exact: float
    log_payoff: float
    log_payoff_all_in: float
    median_all_in_90: float


def coinflip_report(n_rounds: int = 90, initial_wealth: float = 1000.0) -> CoinflipReport:
    sol = solve_leverage(COINFLIP)
    all_in = expected_log_payoff(1.0, COINFLIP)
    # median of a symmetric binomial path: half the flips won
    wins = n_rounds // 2
    median = initial_wealth * (1 + COINFLIP.up) ** wins * (1 + COINFLIP.down) ** (n_rounds - wins)
    return CoinflipReport(sol.f_exact, sol.expected_log_payoff_at_exact, all_in, median)
