"""One test group per acceptance criterion, each at its stated tolerance and time limit."""

import math
import time

import numpy as np
import pytest
from scipy import stats

from powkelly import Environment, PlayerSpec, Scenario, Static, TwoPointReturn, make_balance_sheet
from powkelly.cli import verify_poisson
from powkelly.equilibrium import (
    EquilibriumProblem,
    equilibrium_closed_form,
    equilibrium_fixed_point,
    share_and_dominance,
)
from powkelly.kelly import expected_log_payoff, f_max_exact
from powkelly.presets import COINFLIP, bitcoin_report, bitcoin_scenario
from powkelly.rewards import ProcessState, mgf_compound, mgf_poisson_reward
from powkelly.simulator import run_coinflip, run_game, sweep_f_vs_p, template_from_scenario

import test_core
import test_equilibrium
import test_kelly
import test_pools
import test_simulator


# -- 1 ----------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_coinflip_optimum(note):
    f_max_exact(COINFLIP)
    start = time.perf_counter()
    f = f_max_exact(COINFLIP)
    g = expected_log_payoff(f, COINFLIP)
    elapsed = time.perf_counter() - start
    note(f"f = {f:.6f}, E[log] = {g:.7f}, {elapsed * 1e6:.1f} us")
    assert abs(f - 0.32609) <= 1e-4
    assert abs(g - 0.002439) <= 1e-5
    assert elapsed < 1e-3


# -- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_all_in_median(note):
    start = time.perf_counter()
    res = run_coinflip(COINFLIP, 1.0, 90, 100_000, initial_wealth=1000.0, seed=2)
    elapsed = time.perf_counter() - start
    note(f"median wealth after 90 flips = {res.median_wealth:.1f}, {elapsed:.2f} s")
    assert 400 <= res.median_wealth <= 570
    assert elapsed < 5.0


# -- 3 ----------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_bitcoin_example(note):
    rep = bitcoin_report()
    q = rep.sharpe_route
    note(f"Sharpe route: f = {q.leverage:.3f}, E = {q.equity:.4g}, L = {q.liabilities:.4g}, "
         f"log payoff = {q.log_payoff:.4g}, annualized = {q.annualized:.1%}")
    x = rep.exact
    note(f"exact recomputation: f = {x.leverage:.4f}, E = {x.equity:.4g}, L = {x.liabilities:.4g}, "
         f"log payoff = {x.log_payoff:.4g}, annualized = {x.annualized:.1%}")
    assert 5.0 <= q.leverage <= 6.0
    assert 1.5e-5 <= q.log_payoff <= 2.5e-5
    assert 1.2 <= q.annualized <= 2.2


@pytest.mark.criterion(3)
def test_bitcoin_exact_recomputation_is_the_maximizer():
    rep = bitcoin_report()
    x = rep.exact
    # unrounded inputs: the exact optimum beats the Sharpe-route leverage
    assert x.log_payoff >= rep.exact_at_sharpe_leverage
    assert x.equity + x.liabilities == pytest.approx(rep.mining_assets, rel=1e-12)
    grid = np.linspace(0.01, 20, 20_000)
    b = 118750.0 / rep.mining_assets - rep.cost_rate
    p = rep.mining_assets / (rep.mining_assets + rep.others)
    values = p * np.log1p(grid * b) + (1 - p) * np.log1p(-grid * rep.cost_rate)
    assert abs(grid[np.argmax(values)] - x.leverage) <= grid[1] - grid[0]


# -- 4 ----------------------------------------------------------------------

def _zero_cost_scenario():
    env = Environment(6.25, 600.0, 0.0)
    players = [PlayerSpec(k, 1.0, 0.0, Static(make_balance_sheet(m, 1.0)))
               for k, m in (("a", 1.0), ("b", 2.0), ("c", 5.0))]
    return Scenario(env, players, horizon=6000.0, seed=2718)


@pytest.mark.criterion(4)
def test_mgf_identity(note):
    env = Environment(6.25, 600.0, 0.0, difficulty=600.0 * 8.0)
    state = ProcessState(np.array([1.0, 2.0, 5.0]), 1.0, 0.0, env)
    worst = 0.0
    for i in range(3):
        for u in np.linspace(-2.0, 2.0, 20) / env.block_reward:
            a = mgf_compound(float(u), i, state, 36000.0)
            b = mgf_poisson_reward(float(u), i, state, 36000.0)
            worst = max(worst, abs(a - b) / abs(b))
    note(f"max relative MGF difference over 20 points x 3 players = {worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.criterion(4)
def test_revenue_ks(note):
    start = time.perf_counter()
    out = verify_poisson(_zero_cost_scenario(), 100_000, player=0)
    elapsed = time.perf_counter() - start
    note(f"KS D = {out['ks_statistic']:.4f}, p = {out['ks_pvalue']:.3f}, {elapsed:.1f} s")
    assert not out["ks_rejected"]
    assert out["ks_pvalue"] >= 0.01
    assert elapsed < 30.0


# -- 5 ----------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_stage_return_moments(note):
    rng = np.random.default_rng(55)
    start = time.perf_counter()
    worst = 0.0
    for k in range(20):
        n_players = int(rng.integers(2, 6))
        holdings = rng.uniform(0.1, 10.0, n_players)
        costs = rng.uniform(0.0, 0.05, n_players)
        env = Environment(float(rng.uniform(0.5, 10.0)), 1.0, 0.0)
        players = [PlayerSpec(f"p{j}", 1.0, float(costs[j]), Static(make_balance_sheet(float(holdings[j]), 1.0)))
                   for j in range(n_players)]
        sc = Scenario(env, players, horizon=10_000.0, seed=1000 + k)
        res = run_game(sc, 100, record_series=False)
        winners = np.concatenate([t.winners for t in res.trajectories])
        n = len(winners)
        assert n >= 990_000
        H = holdings.sum()
        B = env.block_reward
        for j in range(n_players):
            r_stage = B * (winners == j) - costs[j] * holdings[j]
            mean = B * holdings[j] / H - costs[j] * holdings[j]
            p = holdings[j] / H
            var = B * B * p * (1 - p)
            z_mean = abs(r_stage.mean() - mean) / math.sqrt(var / n)
            fourth = np.mean((r_stage - mean) ** 4)
            z_var = abs(r_stage.var() - var) / math.sqrt((fourth - var * var) / n)
            worst = max(worst, z_mean, z_var)
            assert z_mean < 4 and z_var < 4
    elapsed = time.perf_counter() - start
    note(f"largest deviation = {worst:.2f} standard errors over 20 scenarios, {elapsed:.1f} s")
    assert elapsed < 60.0


# -- 6 ----------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_equilibrium_oracles(note):
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        prob = test_equilibrium.random_problem(rng, m_max=20)
        a = equilibrium_closed_form(prob)
        b = equilibrium_fixed_point(prob)
        assert a.support == b.support
        scale = np.maximum(np.abs(a.holdings), 1e-300)
        inside = a.holdings > 0
        rel = np.abs(b.holdings - a.holdings)[inside] / scale[inside]
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
        assert np.all(b.holdings[~inside] == 0)
    elapsed = time.perf_counter() - start
    note(f"max relative holding difference = {worst:.2e}, {elapsed:.1f} s")
    assert worst <= 1e-8
    assert elapsed < 10.0


# -- 7 ----------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_homogeneous_shares(note):
    env = Environment(1.0)
    c = 0.01
    y = 1 / c
    at_085 = equilibrium_closed_form(EquilibriumProblem([c] * 10, 0.1 * y, env))
    at_080 = equilibrium_closed_form(EquilibriumProblem([c] * 8, 0.0, env))
    assert at_085.world_hash / y == pytest.approx(0.85, rel=1e-14)
    assert at_080.world_hash / y == pytest.approx(0.80, rel=1e-14)
    s85 = share_and_dominance(at_085, [c] * 10, env).shares[0]
    s80 = share_and_dominance(at_080, [c] * 8, env).shares[0]
    note(f"shares at H/Y' = 0.85 and 0.80: {s85:.4%}, {s80:.4%}")
    assert abs(s85 - 0.5 * (1 / 0.85 - 1)) <= 1e-10
    assert abs(s80 - 0.125) <= 1e-10
    assert abs(at_085.shares[0] - s85) <= 1e-10


@pytest.mark.criterion(7)
def test_dominance_threshold(note):
    env = Environment(1.0)
    costs = [1 / 1.7, 1.0]
    res = equilibrium_closed_form(EquilibriumProblem(costs, 0.35, env))
    assert res.world_hash == pytest.approx(0.85, rel=1e-14)
    rep = share_and_dominance(res, costs, env)
    note(f"1.7x efficient player share = {rep.shares[0]:.12f}, dominant = {bool(rep.dominant[0])}")
    assert abs(rep.shares[0] - 0.5) <= 1e-10
    assert abs(res.shares[0] - 0.5) <= 1e-10
    assert rep.dominant[0] and not rep.dominant[1]


# -- 8 ----------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_sweep_zero_crossing(note):
    template = template_from_scenario(bitcoin_scenario())
    res = sweep_f_vs_p(template, np.arange(1, 1000) / 1000)
    note(f"zero crossing at p = {res.zero_crossing:.3f}, payoff maximum at p = {res.argmax:.3f}")
    assert abs(res.zero_crossing - 0.2) <= 1e-3
    # sign change of the payoff brackets the crossing
    k = int(np.flatnonzero(res.p >= res.zero_crossing)[0])
    assert res.log_payoff[k - 1] > 0 and res.log_payoff[k] <= 1e-18
    assert abs(res.argmax - 0.07) <= 0.03


# -- 9 ----------------------------------------------------------------------

PROPERTY_SUITES = [
    test_core.test_make_balance_sheet_invariants,
    test_core.test_validate_ordering,
    test_kelly.test_concavity_random_instances,
    test_kelly.test_grid_oracle_100_instances,
    test_equilibrium.test_best_response_maximizes_sharpe_on_grid,
    test_pools.test_associativity,
    test_simulator.test_determinism_across_workers,
]


@pytest.mark.criterion(9)
@pytest.mark.parametrize("suite", PROPERTY_SUITES, ids=lambda fn: fn.__name__)
def test_property_suite(suite):
    suite()
