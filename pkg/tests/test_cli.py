import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from powkelly.cli import main
from powkelly.scenario import ScenarioError, load_scenario, scenario_from_dict, scenario_to_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def growth_doc(costs, z=0.0, reward=1.0):
    return {"environment": {"block_reward": reward, "block_interval": 600, "riskfree_rate": 0.0},
            "players": [{"id": f"g{k}", "cost_rate": c, "strategy": "growth"} for k, c in enumerate(costs)],
            "exogenous_hash": z}


def test_example_presets(capsys):
    code, out, _ = run(capsys, "example", "coinflip")
    assert code == 0
    values = {r["quantity"]: float(r["value"]) for r in rows_of(out)}
    assert values["f_exact"] == pytest.approx(0.3261, abs=1e-4)
    assert values["log_payoff"] == pytest.approx(0.0024, abs=1e-4)
    code, out, _ = run(capsys, "example", "bitcoin")
    rows = {r["label"]: r for r in rows_of(out)}
    assert 5.0 <= float(rows["sharpe"]["leverage"]) <= 6.0
    assert float(rows["sharpe"]["equity"]) == pytest.approx(6.0e5, rel=0.02)
    assert float(rows["sharpe"]["liabilities"]) == pytest.approx(2.7e6, rel=0.02)
    assert float(rows["exact"]["leverage"]) == pytest.approx(6.9567, rel=1e-4)


def test_equilibrium_homogeneous(capsys, tmp_path):
    code, out, _ = run(capsys, "equilibrium", "--scenario", write(tmp_path, growth_doc([0.01] * 10)))
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 10
    assert all(float(r["share"]) == pytest.approx(0.1, abs=1e-12) for r in rows)
    assert all(r["in_support"] == "true" and r["dominant"] == "false" for r in rows)


def test_equilibrium_single_player(capsys, tmp_path):
    code, out, _ = run(capsys, "equilibrium", "--scenario", write(tmp_path, growth_doc([0.5], reward=3.0)))
    assert float(rows_of(out)[0]["M_hat"]) == pytest.approx(2.0)


def test_equilibrium_dominance(capsys, tmp_path):
    doc = growth_doc([1 / 1.7, 1.0], z=0.35)
    code, out, _ = run(capsys, "equilibrium", "--scenario", write(tmp_path, doc), "--format", "json")
    res = json.loads(out)
    assert res["world_hash"] == pytest.approx(0.85)
    assert res["rows"][0]["share"] == pytest.approx(0.5, abs=1e-10)
    assert res["rows"][0]["dominant"] is True and res["rows"][1]["dominant"] is False


def test_optimize_without_growth_players(capsys):
    code, out, _ = run(capsys, "optimize", "--scenario", str(SCENARIOS / "static_zero_cost.json"))
    assert code == 0
    assert out == "player_id,f_exact,f_approx,E,L,M,F,sharpe,log_payoff\n"


def test_optimize_bitcoin(capsys):
    code, out, _ = run(capsys, "optimize", "--scenario", str(SCENARIOS / "bitcoin.json"))
    row = rows_of(out)[0]
    assert row["player_id"] == "miner"
    assert float(row["f_exact"]) == pytest.approx(6.9567, rel=1e-4)
    assert float(row["F"]) == 0


def test_sweep_zero_crossing_row(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", str(SCENARIOS / "bitcoin.json"))
    rows = rows_of(out)
    assert len(rows) == 999
    first_zero = next(r for r in rows if float(r["f"]) == 0.0)
    assert float(first_zero["p"]) == pytest.approx(0.2, abs=1e-3)


def test_simulate_zero_trajectories(capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", str(SCENARIOS / "bitcoin.json"), "--trajectories", "0")
    assert code == 0 and out == "trajectory,stages,final_log_wealth\n"


def test_outputs_are_byte_identical(capsys, tmp_path):
    outs = []
    for k in range(2):
        target = tmp_path / f"out{k}.csv"
        code, _, _ = run(capsys, "simulate", "--scenario", str(SCENARIOS / "bitcoin.json"),
                         "--trajectories", "20", "--seed", "99", "--out", str(target))
        assert code == 0
        outs.append(target.read_bytes())
    assert outs[0] == outs[1]
    code, _, _ = run(capsys, "simulate", "--scenario", str(SCENARIOS / "bitcoin.json"),
                     "--trajectories", "20", "--seed", "100", "--out", str(tmp_path / "other.csv"))
    assert (tmp_path / "other.csv").read_bytes() != outs[0]


def test_csv_numbers_round_trip(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", str(SCENARIOS / "bitcoin.json"), "--grid", "7",
                       "--format", "csv")
    code, js, _ = run(capsys, "sweep", "--scenario", str(SCENARIOS / "bitcoin.json"), "--grid", "7",
                      "--format", "json")
    for row, ref in zip(rows_of(out), json.loads(js)["rows"]):
        assert float(row["log_payoff"]) == ref["log_payoff"]
        assert float(row["f"]) == ref["f"]


def test_verify_poisson_passes(capsys):
    code, out, _ = run(capsys, "verify-poisson", "--scenario", str(SCENARIOS / "static_zero_cost.json"),
                       "--trajectories", "5000")
    assert code == 0
    row = rows_of(out)[0]
    assert row["ks_rejected"] == "false" and row["mgf_ok"] == "true"


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["players"][0].__setitem__("cost_rate", "x"), "players[0].cost_rate"),
    (lambda d: d["players"][1].__setitem__("bogus", 1), "players[1].bogus"),
    (lambda d: d["environment"].__setitem__("block_reward", -1), "environment.block_reward"),
    (lambda d: d["players"][2].__setitem__("strategy", "greedy"), "players[2].strategy"),
    (lambda d: d.__setitem__("seed", -3), "seed"),
    (lambda d: d["players"][1].__setitem__("id", "g0"), "players[1].id"),
])
def test_malformed_scenario_exit_code(capsys, tmp_path, mutate, path):
    doc = growth_doc([0.01, 0.02, 0.03])
    mutate(doc)
    code, out, err = run(capsys, "equilibrium", "--scenario", write(tmp_path, doc))
    assert code == 2
    assert path in err and out == ""


def test_invalid_json_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code, _, err = run(capsys, "optimize", "--scenario", str(path))
    assert code == 2 and "invalid JSON" in err
    code, _, _ = run(capsys, "optimize", "--scenario", str(tmp_path / "missing.json"))
    assert code == 2


def test_model_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--scenario", str(SCENARIOS / "bitcoin.json"), "--player", "nobody")
    assert code == 1 and "nobody" in err


def test_scenario_pools_section(tmp_path):
    doc = {
        "environment": {"block_reward": 1.0, "block_interval": 1, "riskfree_rate_annual": 0.05},
        "players": [
            {"id": "a", "cost_rate": 0.001, "strategy": "growth-fixed-hash", "mining_assets": 10},
            {"id": "b", "cost_rate": 0.003, "strategy": "static",
             "sheet": {"equity": 10, "liabilities": 0, "mining_assets": 10, "riskfree_assets": 0}},
            {"id": "c", "cost_rate": 0.002, "strategy": "growth"},
        ],
        "exogenous_hash": 100.0,
        "pools": [{"type": "risk-sharing", "id": "P", "members": ["a", "b"]},
                  {"type": "risk-free", "id": "RF", "target_p": 0.01, "offered_cost_rate": 0.001}],
    }
    sc = scenario_from_dict(doc)
    ids = [p.id for p in sc.players]
    assert ids == ["c", "P", "RF"]
    assert sc.players[1].cost_rate == pytest.approx(0.002)
    assert sc.players[1].strategy.mining_assets == 20.0
    assert sc.players[2].liability_interest_credit
    assert sc.environment.riskfree_rate == pytest.approx(0.05 / 31557600)
    doc["pools"][0]["members"] = ["a", "zz"]
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.path == "pools[0].members[1]"


def test_scenario_round_trip():
    sc = load_scenario(SCENARIOS / "bitcoin.json")
    assert scenario_from_dict(scenario_to_dict(sc)) == sc


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "powkelly", "example", "coinflip", "--format", "json"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["rows"][0]["quantity"] == "f_exact"
