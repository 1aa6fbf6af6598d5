"""Scenario files (JSON).

Layout::

    {
      "environment": {"block_reward": 118750, "block_interval": 600,
                      "riskfree_rate": 0.0,            # per block interval
                      "riskfree_rate_annual": 0.05,    # alternative, converted
                      "difficulty": null},
      "players": [
        {"id": "a", "cost_rate": 0.03, "facility_price": 1.0,
         "strategy": "growth"},
        {"id": "b", "cost_rate": 0.03, "strategy": "growth-fixed-hash",
         "mining_assets": 3.3e6},
        {"id": "c", "strategy": "static",
         "sheet": {"equity": 1, "liabilities": 0, "mining_assets": 1,
                   "riskfree_assets": 0}}
      ],
      "exogenous_hash": 0.0,
      "horizon": 86400,
      "seed": 0,
      "pools": [
        {"type": "risk-sharing", "id": "P", "members": ["b", "c"]},
        {"type": "risk-free", "id": "RF", "target_p": 0.001,
         "offered_cost_rate": 0.02}
      ]
    }

Times are in seconds. Unknown keys are rejected. Every error carries the path
of the offending field, e.g. ``players[2].cost_rate``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .core import (
    BalanceSheet,
    Environment,
    GrowthRate,
    ModelError,
    PlayerSpec,
    Scenario,
    Static,
    annual_to_interval_rate,
    validate,
)
from .pools import PoolMember, aggregate_risk_sharing, build_risk_free_pool

STRATEGIES = ("static", "growth", "growth-fixed-hash")


class ScenarioError(ModelError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


def _join(path: str, key: Union[str, int]) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _mapping(value: Any, path: str, allowed: tuple, required: tuple = ()) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ScenarioError(path, "expected an object")
    for key in value:
        if key not in allowed:
            raise ScenarioError(_join(path, key), "unknown field")
    for key in required:
        if key not in value:
            raise ScenarioError(_join(path, key), "missing required field")
    return value


def _number(obj: Dict[str, Any], key: str, path: str, default: Optional[float] = None,
            minimum: Optional[float] = None, positive: bool = False) -> Optional[float]:
    where = _join(path, key)
    if key not in obj or obj[key] is None:
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(where, "expected a number")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(where, "must be finite")
    if positive and not value > 0:
        raise ScenarioError(where, "must be > 0")
    if minimum is not None and value < minimum:
        raise ScenarioError(where, f"must be >= {minimum:g}")
    return value


def _string(obj: Dict[str, Any], key: str, path: str) -> str:
    value = obj[key]
    if not isinstance(value, str) or not value:
        raise ScenarioError(_join(path, key), "expected a non-empty string")
    return value


def _environment(raw: Any) -> Environment:
    path = "environment"
    obj = _mapping(raw, path, ("block_reward", "block_interval", "riskfree_rate",
                               "riskfree_rate_annual", "difficulty"), ("block_reward",))
    reward = _number(obj, "block_reward", path, positive=True)
    interval = _number(obj, "block_interval", path, default=600.0, positive=True)
    if obj.get("riskfree_rate") is not None and obj.get("riskfree_rate_annual") is not None:
        raise ScenarioError(_join(path, "riskfree_rate_annual"),
                            "give either riskfree_rate or riskfree_rate_annual, not both")
    rate = _number(obj, "riskfree_rate", path, default=None, minimum=0.0)
    if rate is None:
        annual = _number(obj, "riskfree_rate_annual", path, default=0.0, minimum=0.0)
        rate = annual_to_interval_rate(annual, interval)
    difficulty = _number(obj, "difficulty", path, default=None, positive=True)
    return Environment(reward, interval, rate, difficulty)


def _sheet(raw: Any, path: str) -> BalanceSheet:
    keys = ("equity", "liabilities", "mining_assets", "riskfree_assets")
    obj = _mapping(raw, path, keys, keys)
    values = [_number(obj, k, path) for k in keys]
    sheet = BalanceSheet(*values)
    problem = validate(sheet)
    if problem is not None:
        raise ScenarioError(path, f"balance sheet violates {problem}")
    return sheet


def _player(raw: Any, path: str) -> PlayerSpec:
    obj = _mapping(raw, path, ("id", "cost_rate", "facility_price", "strategy", "sheet", "mining_assets"),
                   ("id", "strategy"))
    pid = _string(obj, "id", path)
    cost = _number(obj, "cost_rate", path, default=0.0, minimum=0.0)
    price = _number(obj, "facility_price", path, default=1.0, positive=True)
    kind = obj["strategy"]
    if kind not in STRATEGIES:
        raise ScenarioError(_join(path, "strategy"), f"expected one of {', '.join(STRATEGIES)}")
    if kind == "static":
        if "sheet" not in obj:
            raise ScenarioError(_join(path, "sheet"), "static players need a balance sheet")
        if "mining_assets" in obj:
            raise ScenarioError(_join(path, "mining_assets"), "static players take mining assets from the sheet")
        strategy = Static(_sheet(obj["sheet"], _join(path, "sheet")))
    else:
        if "sheet" in obj:
            raise ScenarioError(_join(path, "sheet"), "only static players carry a fixed sheet")
        if kind == "growth-fixed-hash":
            if "mining_assets" not in obj:
                raise ScenarioError(_join(path, "mining_assets"), "fixed-hash players need mining_assets")
            strategy = GrowthRate(_number(obj, "mining_assets", path, positive=True))
        else:
            if "mining_assets" in obj:
                raise ScenarioError(_join(path, "mining_assets"),
                                    "growth players choose their own mining assets")
            strategy = GrowthRate()
    try:
        return PlayerSpec(pid, price, cost, strategy)
    except ModelError as exc:
        raise ScenarioError(path, str(exc)) from None


def _holding(player: PlayerSpec) -> float:
    s = player.strategy
    return s.sheet.mining_assets if isinstance(s, Static) else (s.mining_assets or 0.0)


def _apply_pools(raw: Any, players: List[PlayerSpec], exogenous: float, env: Environment) -> List[PlayerSpec]:
    if not isinstance(raw, list):
        raise ScenarioError("pools", "expected a list")
    for k, entry in enumerate(raw):
        path = _join("pools", k)
        kind = entry.get("type") if isinstance(entry, dict) else None
        if kind == "risk-sharing":
            obj = _mapping(entry, path, ("type", "id", "members"), ("id", "members"))
            pool_id = _string(obj, "id", path)
            ids = obj["members"]
            if not isinstance(ids, list) or not ids:
                raise ScenarioError(_join(path, "members"), "expected a non-empty list of player ids")
            by_id = {p.id: p for p in players}
            members = []
            for j, mid in enumerate(ids):
                where = _join(_join(path, "members"), j)
                if mid not in by_id:
                    raise ScenarioError(where, f"unknown player id {mid!r}")
                member = by_id[mid]
                if not (member.is_static or member.strategy.mining_assets is not None):
                    raise ScenarioError(where, "pool members need fixed mining assets")
                if member.facility_price != 1.0:
                    raise ScenarioError(where, "pool members need facility_price 1")
                members.append(PoolMember(mid, _holding(member), member.cost_rate))
            try:
                pool = aggregate_risk_sharing(members, pool_id)
            except ModelError as exc:
                raise ScenarioError(_join(path, "members"), str(exc)) from None
            players = [p for p in players if p.id not in set(ids)] + [pool.as_player()]
        elif kind == "risk-free":
            obj = _mapping(entry, path, ("type", "id", "target_p", "offered_cost_rate"),
                           ("id", "target_p", "offered_cost_rate"))
            pool_id = _string(obj, "id", path)
            p = _number(obj, "target_p", path)
            if not 0 < p < 1:
                raise ScenarioError(_join(path, "target_p"), "must lie strictly between 0 and 1")
            fee = _number(obj, "offered_cost_rate", path, positive=True)
            others = exogenous + sum(_holding(q) for q in players)
            if not others > 0:
                raise ScenarioError(path, "a risk-free pool needs other mining assets to size against")
            pool = build_risk_free_pool(p, others, fee, env)
            if not pool.profitable:
                raise ScenarioError(_join(path, "offered_cost_rate"), "pool is unprofitable at this fee")
            players = players + [pool.as_player(pool_id)]
        else:
            raise ScenarioError(_join(path, "type"), "expected 'risk-sharing' or 'risk-free'")
    return players


def scenario_from_dict(raw: Any) -> Scenario:
    obj = _mapping(raw, "", ("environment", "players", "exogenous_hash", "horizon", "seed", "pools"),
                   ("environment", "players"))
    env = _environment(obj["environment"])
    if not isinstance(obj["players"], list):
        raise ScenarioError("players", "expected a list")
    players = [_player(p, _join("players", k)) for k, p in enumerate(obj["players"])]
    seen = set()
    for k, p in enumerate(players):
        if p.id in seen:
            raise ScenarioError(_join(_join("players", k), "id"), f"duplicate player id {p.id!r}")
        seen.add(p.id)
    exogenous = _number(obj, "exogenous_hash", "", default=0.0, minimum=0.0)
    horizon = _number(obj, "horizon", "", default=env.block_interval, positive=True)
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioError("seed", "expected an integer in [0, 2^64)")
    if "pools" in obj:
        players = _apply_pools(obj["pools"], players, exogenous, env)
    if not players:
        raise ScenarioError("players", "need at least one player")
    try:
        return Scenario(env, players, exogenous, horizon, seed)
    except ModelError as exc:
        raise ScenarioError("", str(exc)) from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(raw)


def _player_dict(p: PlayerSpec) -> Dict[str, Any]:
    out: Dict[str, Any] = {"id": p.id, "cost_rate": p.cost_rate, "facility_price": p.facility_price}
    s = p.strategy
    if isinstance(s, Static):
        out["strategy"] = "static"
        out["sheet"] = {"equity": s.sheet.equity, "liabilities": s.sheet.liabilities,
                        "mining_assets": s.sheet.mining_assets, "riskfree_assets": s.sheet.riskfree_assets}
    elif s.mining_assets is None:
        out["strategy"] = "growth"
    else:
        out["strategy"] = "growth-fixed-hash"
        out["mining_assets"] = s.mining_assets
    return out


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Inverse of ``scenario_from_dict`` for pool-free scenarios (pools are already expanded)."""
    env = scenario.environment
    if any(p.liability_interest_credit for p in scenario.players):
        raise ModelError("risk-free pool players cannot be written back as plain players")
    return {
        "environment": {"block_reward": env.block_reward, "block_interval": env.block_interval,
                        "riskfree_rate": env.riskfree_rate, "difficulty": env.difficulty},
        "players": [_player_dict(p) for p in scenario.players],
        "exogenous_hash": scenario.exogenous_hash,
        "horizon": scenario.horizon,
        "seed": int(scenario.seed),
    }
