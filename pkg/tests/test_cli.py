import json

import pytest

from chanopt.cli import main
from chanopt.experiments import (
    CompareParams,
    ExperimentSpec,
    PoaParams,
    degree_centralization,
    load_spec,
    nonincreasing_along,
    run_compare_topologies,
    run_experiment,
    run_poa_sweep,
    run_tightness_matching,
    topology_rps,
)
from chanopt.netcore import DemandMatrix


@pytest.fixture
def demand_file(tmp_path):
    path = tmp_path / "d.json"
    assert main(["--seed", "5", "gen-demand", "--n", "10", "--out", str(path)]) == 0
    return path


def read(path):
    return json.loads(path.read_text())


def test_gen_demand_respects_global_seed(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["--seed", "1", "gen-demand", "--n", "8", "--out", str(a)])
    main(["gen-demand", "--n", "8", "--seed", "1", "--out", str(b)])
    assert read(a) == read(b)
    main(["gen-demand", "--n", "8", "--seed", "2", "--out", str(b)])
    assert read(a) != read(b)


def test_design_commands(demand_file, tmp_path):
    d = str(demand_file)
    assert main(["tree-opt", "--demand", d, "--out", str(tmp_path / "t.json")]) == 0
    tree = read(tmp_path / "t.json")
    assert len(tree["topology"]["edges"]) == 9
    assert main(["hub", "--demand", d, "--out", str(tmp_path / "h.json")]) == 0
    hub = read(tmp_path / "h.json")
    assert hub["cost"]["liquidity_cost"] == pytest.approx(2 * hub["cost"]["record_cost"])
    (tmp_path / "topo.json").write_text(json.dumps(tree["topology"]))
    assert main(["allocate", "--demand", d, "--topology", str(tmp_path / "topo.json"), "--liquidity", "3",
                 "--out", str(tmp_path / "a.json")]) == 0
    alloc = read(tmp_path / "a.json")
    assert sum(w for _, _, w in alloc["omega"]) == pytest.approx(3.0)
    assert alloc["rps"] == pytest.approx(tree["rps0"] / 9)
    assert main(["cost", "--demand", d, "--design", "complete", "--liquidity", "2", "--out", str(tmp_path / "c.json")]) == 0
    assert read(tmp_path / "c.json")["liquidity"] == 2.0


def test_simulate_and_game(demand_file, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--demand", str(demand_file), "--resets", "300", "--out", str(out)]) == 0
    assert (out / "channels.csv").exists() and read(out / "summary.json")["total_resets"] == 300
    assert main(["simulate", "--demand", str(demand_file), "--out", str(out)]) == 2
    g = tmp_path / "game"
    assert main(["game", "--demand", str(demand_file), "--start", "gomory-hu", "--out", str(g)]) == 0
    assert "equilibrium" in read(g / "final.json")


def test_exit_codes(tmp_path, demand_file):
    assert main(["tree-opt", "--demand", str(tmp_path / "missing.json")]) == 2
    assert main(["gen-demand", "--n", "1"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["experiment", "poa-sweep", "--set", "k_max=2"]) == 2
    assert main(["experiment", "poa-sweep", "--set", "bogus=2"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"alpha": 1.0}))
    assert main(["gen-demand", "--config", str(bad)]) == 2


def test_flagged_failure_exit(monkeypatch, tmp_path):
    import chanopt.experiments as ex
    from chanopt.experiments import Outcome, Table

    def failing(params, seed, threads):
        return Outcome({"t": Table(["x"], [[1]])}, {"something": False})

    monkeypatch.setitem(ex.KINDS, "tightness-matching", (ex.TightnessParams, failing))
    assert main(["experiment", "tightness-matching", "--out", str(tmp_path / "f")]) == 3
    assert read(tmp_path / "f" / "manifest.json")["checks"] == {"something": False}


def test_internal_error_exit(monkeypatch, demand_file):
    import chanopt.cli as cli

    def boom(*a, **k):
        raise ZeroDivisionError("x")

    monkeypatch.setattr(cli, "gomory_hu", boom)
    assert main(["tree-opt", "--demand", str(demand_file)]) == 4


def test_config_file_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 6, "degree-exponent": 2.0}))
    main(["gen-demand", "--config", str(cfg), "--out", str(tmp_path / "x.json")])
    assert read(tmp_path / "x.json")["n"] == 6
    main(["gen-demand", "--config", str(cfg), "--n", "7", "--out", str(tmp_path / "y.json")])
    assert read(tmp_path / "y.json")["n"] == 7


def test_manifest_rerun_is_byte_identical(tmp_path):
    first = tmp_path / "one"
    assert main(["--seed", "4", "experiment", "game-dynamics", "--set", "instances=3", "--out", str(first)]) == 0
    manifest = read(first / "manifest.json")
    assert manifest["seed"] == 4 and manifest["params"]["instances"] == 3
    assert {"version", "wall_time_s", "kind"} <= set(manifest)
    second = tmp_path / "two"
    assert main(["experiment", "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
    assert (first / "dynamics.csv").read_bytes() == (second / "dynamics.csv").read_bytes()


def test_experiment_config_params(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"max_pairs": 4}))
    assert main(["experiment", "tightness-matching", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "tightness.csv").read_text().count("\n") == 5


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("nope").build_params()
    with pytest.raises(ValueError):
        ExperimentSpec("compare-topologies", {"n": 2}).build_params()
    assert ExperimentSpec("compare-topologies", {"exponents": [2.0, 2.5]}).build_params().exponents == (2.0, 2.5)


def test_three_agents_hub_is_a_tree():
    d = DemandMatrix.from_pairs(3, {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 1.0})
    r = topology_rps(d)
    assert r["hub"] >= r["tree"] * (1 - 1e-12)
    assert r["hub"] == pytest.approx(r["tree"])


def test_compare_topologies_small_and_parallel_agree():
    p = CompareParams(n=15, exponents=(2.2, 2.8), trials=3)
    a = run_compare_topologies(p, seed=1, threads=1)
    b = run_compare_topologies(p, seed=1, threads=2)
    assert a.tables["trials"].to_csv() == b.tables["trials"].to_csv()
    assert a.checks["hub_tree_ratio_le_8"]


def test_tightness_single_pair_and_poa_rows():
    assert run_tightness_matching(1) == pytest.approx(1.0)
    out = run_poa_sweep(PoaParams(k_max=6))
    assert [r[0] for r in out.tables["poa"].rows] == [4, 5, 6]
    assert out.ok


def test_centrality_helpers():
    star = DemandMatrix.from_pairs(5, {(0, k): 1.0 for k in range(1, 5)})
    ring = DemandMatrix.from_pairs(5, {(k, (k + 1) % 5): 1.0 for k in range(5)})
    assert degree_centralization(star) == pytest.approx(1.0)
    assert degree_centralization(ring) == 0.0
    rows = [[1, 5.0], [3, 1.0], [2, 2.0]]
    assert nonincreasing_along(rows, 0, 1)
    assert not nonincreasing_along([[1, 1.0], [2, 3.0]], 0, 1)


def test_run_experiment_writes_manifest(tmp_path):
    run_experiment(ExperimentSpec("lifetime-validation", {"omegas": [4], "lambdas": [1.0], "target_resets": 2000}, 3), tmp_path)
    spec = load_spec(tmp_path / "manifest.json")
    assert spec.kind == "lifetime-validation" and spec.seed == 3
    assert spec.params["omegas"] == [4]
