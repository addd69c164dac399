import math

import numpy as np
import pytest

from chanopt.costing import channel_lifetime, network_rps, optimal_allocation
from chanopt.montecarlo import (
    SimConfig,
    estimate_rps,
    first_reset_times,
    round_to_even,
    simulate,
    single_channel,
)
from chanopt.netcore import DemandMatrix, LiquidityAllocation, PaymentNetwork, Topology
from chanopt.routing import edge_rates, tree_routing

from .oracles import markov_lifetime


def test_config_needs_one_stopping_rule():
    cfg = single_channel(4, 1.0)
    with pytest.raises(ValueError):
        SimConfig(cfg.network, cfg.policy, cfg.demand)
    with pytest.raises(ValueError):
        SimConfig(cfg.network, cfg.policy, cfg.demand, horizon=1.0, target_resets=3)
    with pytest.raises(ValueError):
        single_channel(5, 1.0)


def test_same_seed_same_result():
    a = simulate(single_channel(8, 1.0, seed=11, target_resets=500))
    b = simulate(single_channel(8, 1.0, seed=11, target_resets=500))
    c = simulate(single_channel(8, 1.0, seed=12, target_resets=500))
    assert a.elapsed == b.elapsed and np.array_equal(a.reset_times[(0, 1)], b.reset_times[(0, 1)])
    assert a.elapsed != c.elapsed


def test_target_stops_exactly():
    res = simulate(single_channel(4, 2.0, seed=1, target_resets=777))
    assert res.total_resets == 777
    assert res.reset_times[(0, 1)][-1] == res.elapsed


@pytest.mark.parametrize("omega, lam", [(2, 1.0), (4, 0.5), (6, 2.0)])
def test_mean_lifetime_within_confidence(omega, lam):
    res = simulate(single_channel(omega, lam, seed=3, target_resets=20_000))
    life = res.lifetimes((0, 1))
    want = channel_lifetime(omega, lam)
    assert abs(life.mean() - want) < 4 * life.std() / math.sqrt(len(life))


@pytest.mark.parametrize("start", [1, 3, 5])
def test_first_reset_from_uneven_start_matches_markov(start):
    cfg = single_channel(6, 1.0, seed=5, initial=start)
    times = first_reset_times(cfg, 3000)
    want = markov_lifetime(6, 1.0, start)
    assert abs(times.mean() - want) < 4 * times.std() / math.sqrt(len(times))


def test_bad_initial_balance_rejected():
    with pytest.raises(ValueError):
        simulate(single_channel(4, 1.0, initial=4))


def test_horizon_mode_and_rps_estimate():
    res = simulate(SimConfig(**{**single_channel(4, 1.0, seed=2).__dict__, "target_resets": None, "horizon": 5000.0}))
    assert res.elapsed == 5000.0
    est = estimate_rps(res)
    assert abs(est.total.rps - 0.5) < 3 * est.total.half_width
    with pytest.raises(ValueError):
        estimate_rps(res, batches=5)


def test_network_simulation_matches_analytic_rps():
    d = DemandMatrix.from_pairs(4, {(0, 1): 1.0, (0, 3): 0.5, (2, 3): 2.0, (1, 2): 0.25})
    tree = Topology.path(4)
    pol = tree_routing(tree, d)
    rates = edge_rates(pol, d)
    alloc = round_to_even(optimal_allocation(rates, 40.0))
    res = simulate(SimConfig(PaymentNetwork(tree, alloc), pol, d, seed=9, target_resets=60_000))
    est = estimate_rps(res)
    want = network_rps(rates, alloc)
    assert abs(est.total.rps - want) / want < 0.03
    for e, lam in rates.items():
        x = est.per_edge[e]
        assert x.measured
        assert abs(x.rps - 8 * lam / alloc[e] ** 2) < 4 * x.half_width + 1e-9


def test_idle_channel_unmeasured_and_zero_demand():
    topo = Topology.path(3)
    d = DemandMatrix.from_pairs(3, {(0, 1): 1.0})
    alloc = LiquidityAllocation({(0, 1): 4, (1, 2): 4})
    res = simulate(SimConfig(PaymentNetwork(topo, alloc), tree_routing(topo, d), d, target_resets=200))
    est = estimate_rps(res)
    assert not est.per_edge[(1, 2)].measured
    empty = DemandMatrix.from_pairs(3, {})
    pol = tree_routing(topo, empty)
    assert simulate(SimConfig(PaymentNetwork(topo, alloc), pol, empty, horizon=10.0)).total_resets == 0
    with pytest.raises(ValueError):
        simulate(SimConfig(PaymentNetwork(topo, alloc), pol, empty, target_resets=1))


def test_round_to_even():
    out = round_to_even(LiquidityAllocation({(0, 1): 0.3, (1, 2): 4.9, (2, 3): 7.1}))
    assert out.omega == {(0, 1): 2, (1, 2): 4, (2, 3): 8}


def test_outputs(tmp_path):
    res = simulate(single_channel(4, 1.0, target_resets=100))
    res.write_csv(tmp_path / "c.csv")
    res.write_summary(tmp_path / "s.json")
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "edge,u,v,resets,elapsed,rps,mean_lifetime"
