"""Command-line interface: ``powkelly <command> [options]``.

Exit codes: 0 success, 1 model error or failed check, 2 bad arguments or a
malformed scenario file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .core import ConvergenceError, GrowthRate, ModelError, Scenario, Static
from .equilibrium import (
    DEFAULT_TOLERANCE,
    EquilibriumProblem,
    equilibrium_closed_form,
    equilibrium_fixed_point,
    share_and_dominance,
)
from .kelly import mining_return, optimal_balance_sheet, solve_leverage
from .presets import bitcoin_report, coinflip_report
from .rewards import ProcessState, log_mgf_compound, log_mgf_poisson_reward, sample_poisson_reward
from .scenario import ScenarioError, load_scenario
from .simulator import initial_holding, run_game, summary_rows, sweep_f_vs_p, template_from_scenario

KS_ALPHA = 0.01
MGF_POINTS = 20
MGF_RTOL = 1e-12


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def render(columns: Sequence[str], rows: List[Dict[str, Any]], fmt: str,
           extra: Optional[Dict[str, Any]] = None) -> str:
    if fmt == "json":
        doc: Dict[str, Any] = dict(extra or {})
        doc["rows"] = [{c: row[c] for c in columns} for row in rows]
        return json.dumps(_jsonable(doc), indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _holding(player) -> float:
    s = player.strategy
    return s.sheet.mining_assets if isinstance(s, Static) else (s.mining_assets or 0.0)


def _fixed_outside(scenario: Scenario) -> float:
    """Exogenous hash plus everything held by players that do not pick their own hash."""
    return scenario.exogenous_hash + sum(
        _holding(p) for p in scenario.players
        if not (isinstance(p.strategy, GrowthRate) and p.strategy.mining_assets is None))


def cmd_optimize(scenario: Scenario, args) -> tuple:
    """Best response and optimal sheet of each growth player against the initial holdings of the rest.

    Free-choice growth players enter the others' totals at their standalone
    best response, as in the first simulated stage.
    """
    env = scenario.environment
    start = {p.id: initial_holding(p, env) for p in scenario.players}
    total = scenario.exogenous_hash + sum(start.values())
    rows = []
    for p in scenario.players:
        if not isinstance(p.strategy, GrowthRate):
            continue
        others = total - start[p.id]
        if p.strategy.mining_assets is None:
            k = p.unit_cost + env.riskfree_rate
            if not k > 0:
                raise ModelError(f"player {p.id}: zero cost and zero riskfree rate give an unbounded best response")
            m = max(0.0, (env.block_reward / k - others) / 3)
        else:
            m = p.strategy.mining_assets
        row = {"player_id": p.id, "f_exact": 0.0, "f_approx": 0.0, "E": 0.0, "L": 0.0, "M": 0.0,
               "F": 0.0, "sharpe": math.nan, "log_payoff": 0.0}
        if m > 0 and others > 0:
            ret = mining_return(m, others, env.block_reward, p.unit_cost)
            sol = solve_leverage(ret, env.riskfree_rate)
            sheet = optimal_balance_sheet(m, others, p.unit_cost, env)
            row.update(f_exact=sol.f_exact, f_approx=sol.f_approx, E=sheet.equity, L=sheet.liabilities,
                       M=sheet.mining_assets, F=sheet.riskfree_assets, sharpe=sol.sharpe,
                       log_payoff=sol.expected_log_payoff_at_exact)
        elif m > 0:
            raise ModelError(f"player {p.id} faces no competing hash: the lottery is riskless")
        rows.append(row)
    cols = ("player_id", "f_exact", "f_approx", "E", "L", "M", "F", "sharpe", "log_payoff")
    return cols, rows, {"intervals_per_year": env.intervals_per_year}


def cmd_equilibrium(scenario: Scenario, args) -> tuple:
    env = scenario.environment
    growth = [p for p in scenario.players
              if isinstance(p.strategy, GrowthRate) and p.strategy.mining_assets is None]
    cols = ("player_id", "M_hat", "share", "in_support", "dominant")
    outside = _fixed_outside(scenario)
    if not growth:
        return cols, [], {"world_hash": outside, "exogenous_share": 1.0 if outside > 0 else 0.0}
    costs = [p.unit_cost for p in growth]
    problem = EquilibriumProblem(costs, outside, env)
    result = equilibrium_closed_form(problem)
    check = equilibrium_fixed_point(problem, tolerance=args.tolerance)
    report = share_and_dominance(result, costs, env)
    rows = [{"player_id": p.id, "M_hat": result.holdings[i], "share": report.shares[i],
             "in_support": bool(report.in_support[i]), "dominant": bool(report.dominant[i])}
            for i, p in enumerate(growth)]
    scale = max(float(np.max(np.abs(result.holdings))), 1e-300)
    extra = {"world_hash": result.world_hash, "exogenous_share": result.exogenous_share,
             "fixed_point_iterations": check.iterations,
             "fixed_point_max_rel_diff": float(np.max(np.abs(check.holdings - result.holdings))) / scale}
    return cols, rows, extra


def _player_index(scenario: Scenario, player_id: Optional[str]) -> int:
    if player_id is None:
        return 0
    try:
        return scenario.player_index(player_id)
    except KeyError:
        raise ModelError(f"no player with id {player_id!r}") from None


def cmd_simulate(scenario: Scenario, args) -> tuple:
    player = _player_index(scenario, args.player)
    result = run_game(scenario, args.trajectories, workers=args.workers,
                          retarget_difficulty=args.retarget_difficulty, record_series=False)
    rows = summary_rows(result, player)
    s = result.summary
    extra = {"player_id": scenario.players[player].id, "n_trajectories": s.n_trajectories,
             "mean_stages": s.mean_stages,
             "players": [dataclasses.asdict(p) for p in s.players]}
    return ("trajectory", "stages", "final_log_wealth"), rows, extra


def cmd_sweep(scenario: Scenario, args) -> tuple:
    if args.grid < 2:
        raise ModelError("--grid must be >= 2")
    template = template_from_scenario(scenario, args.player)
    grid = np.arange(1, args.grid) / args.grid
    res = sweep_f_vs_p(template, grid)
    rows = [{"p": p, "f": f, "log_payoff": g} for p, f, g in zip(res.p, res.f, res.log_payoff)]
    return ("p", "f", "log_payoff"), rows, {"zero_crossing": res.zero_crossing, "argmax": res.argmax}


def verify_poisson(scenario: Scenario, n: int, player: int = 0, retarget: bool = False) -> Dict[str, Any]:
    """Compare the compound lottery with the Poisson reward model for one player.

    Algebraic route: both log MGFs (cost set to zero) on a grid of ``u``.
    Sampling route: total revenue over the horizon from the game simulator versus
    direct ``B * Poisson`` draws, two-sample KS.
    """
    result = run_game(scenario, n, retarget_difficulty=retarget, record_series=False)
    profile = result.schedule.profiles[0]
    if result.schedule.stationary_from != 0 and len(result.schedule.profiles) > 1:
        raise ModelError("verify-poisson needs holdings that stay fixed across stages")
    env = scenario.environment
    hashes = profile.hash_rates
    state = ProcessState(hashes, 1.0, 0.0, env)
    if env.difficulty is None:
        state = ProcessState(hashes, 1.0, 0.0, dataclasses.replace(env, difficulty=env.difficulty_for(hashes.sum())))
    T = scenario.horizon
    us = np.linspace(-2.0, 2.0, MGF_POINTS) / env.block_reward
    worst = 0.0
    for u in us:
        a = log_mgf_compound(float(u), player, state, T)
        b = log_mgf_poisson_reward(float(u), player, state, T)
        # compare MGFs: relative error of exp(a) vs exp(b)
        worst = max(worst, abs(math.expm1(a - b)))
    simulated = np.array([t.wins[player] for t in result.trajectories], dtype=float) * env.block_reward
    direct = sample_poisson_reward(player, state, T, np.random.default_rng([scenario.seed, 1]), n)
    ks = stats.ks_2samp(simulated, direct)
    return {"player_id": scenario.players[player].id, "mgf_max_rel_diff": worst,
            "mgf_ok": worst <= MGF_RTOL, "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue), "ks_rejected": bool(ks.pvalue < KS_ALPHA),
            "mean_simulated": float(simulated.mean()), "mean_direct": float(direct.mean())}


def cmd_verify_poisson(scenario: Scenario, args) -> tuple:
    if args.trajectories < 2:
        raise ModelError("verify-poisson needs --trajectories >= 2")
    out = verify_poisson(scenario, args.trajectories, _player_index(scenario, args.player),
                         args.retarget_difficulty)
    cols = tuple(out)
    return cols, [out], {}


def cmd_example(name: str, args) -> tuple:
    if name == "coinflip":
        r = coinflip_report()
        rows = [{"quantity": k, "value": v} for k, v in dataclasses.asdict(r).items()]
        return ("quantity", "value"), rows, {}
    r = bitcoin_report()
    rows = []
    for rep in (r.sharpe_route, r.exact):
        rows.append(dataclasses.asdict(rep))
    extra = {"mining_assets": r.mining_assets, "others": r.others, "cost_rate": r.cost_rate,
             "mean": r.mean, "variance": r.variance, "sharpe": r.sharpe,
             "exact_log_payoff_at_sharpe_leverage": r.exact_at_sharpe_leverage}
    return ("label", "leverage", "equity", "liabilities", "log_payoff", "annualized"), rows, extra


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powkelly", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH", help="write here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        return p

    common(sub.add_parser("optimize", help="optimal leverage and balance sheet per growth player"))
    eq = common(sub.add_parser("equilibrium", help="hash-rate equilibrium among growth players"))
    eq.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE,
                    help="fixed-point cross-check tolerance")
    for name, text in (("simulate", "Monte Carlo of the repeated game"),
                       ("verify-poisson", "compound lottery vs Poisson reward model")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--trajectories", type=int, default=1000)
        p.add_argument("--seed", type=int)
        p.add_argument("--retarget-difficulty", action="store_true")
        p.add_argument("--player", help="player id (default: first player)")
        if name == "simulate":
            p.add_argument("--workers", type=int, default=1)
    sw = common(sub.add_parser("sweep", help="optimal leverage and growth against success probability"))
    sw.add_argument("--grid", type=int, default=1000, help="grid points p = k/N")
    sw.add_argument("--player", help="entrant id (default: first growth player)")
    ex = common(sub.add_parser("example", help="built-in worked examples"), scenario=False)
    ex.add_argument("name", choices=("bitcoin", "coinflip"))
    return parser


COMMANDS = {"optimize": cmd_optimize, "equilibrium": cmd_equilibrium, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "verify-poisson": cmd_verify_poisson}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "example":
            cols, rows, extra = cmd_example(args.name, args)
        else:
            scenario = load_scenario(args.scenario)
            if getattr(args, "seed", None) is not None:
                if not 0 <= args.seed < 2**64:
                    raise ScenarioError("seed", "expected an integer in [0, 2^64)")
                scenario = dataclasses.replace(scenario, seed=args.seed)
            cols, rows, extra = COMMANDS[args.command](scenario, args)
    except ScenarioError as exc:
        print(f"powkelly: malformed scenario: {exc}", file=sys.stderr)
        return 2
    except (ModelError, ConvergenceError, OverflowError) as exc:
        print(f"powkelly: {exc}", file=sys.stderr)
        return 1
    text = render(cols, rows, args.format, extra)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.command == "verify-poisson" and rows[0]["ks_rejected"]:
        return 1
    if args.command == "verify-poisson" and not rows[0]["mgf_ok"]:
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
