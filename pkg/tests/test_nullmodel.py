import numpy as np
import pytest
from scipy import stats

import oracles
from btcgraph.nullmodel import (
    REFERENCE_THRESHOLDS_APRIL_2013,
    SATOSHI_PER_BTC,
    NullModelConfig,
    assign_sampled_values,
    compute_thresholds,
    generate_er,
    nearest_rank_percentile,
    read_thresholds_csv,
    threshold_metrics,
    write_thresholds_csv,
)
from btcgraph.txgraph import TxGraph, node_metrics


def _pair_set(graph):
    return set(zip(graph.src.tolist(), graph.dst.tolist()))


# ---------------------------------------------------------------------------
# generation


def test_er_empty():
    graph = generate_er(NullModelConfig(n=5, m=0, seed=1))
    assert graph.node_count == 5
    assert graph.edge_count == 0


def test_er_complete_digraph():
    graph = generate_er(NullModelConfig(n=5, m=20, seed=1))
    pairs = _pair_set(graph)
    assert len(pairs) == 20
    assert pairs == {(i, j) for i in range(5) for j in range(5) if i != j}


def test_er_rejects_too_many_edges():
    with pytest.raises(ValueError):
        NullModelConfig(n=5, m=21)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_er_no_duplicates_no_self_loops(seed):
    graph = generate_er(NullModelConfig(n=2000, m=5000, seed=seed))
    assert len(_pair_set(graph)) == graph.edge_count == 5000
    assert (graph.src != graph.dst).all()


def test_er_seed_deterministic():
    a = generate_er(NullModelConfig(n=1000, m=3000, seed=99))
    b = generate_er(NullModelConfig(n=1000, m=3000, seed=99))
    assert (a.src == b.src).all() and (a.dst == b.dst).all()
    c = generate_er(NullModelConfig(n=1000, m=3000, seed=100))
    assert not ((a.src == c.src).all() and (a.dst == c.dst).all())


def test_er_in_degrees_fit_poisson():
    n, m = 100_000, 266_667
    graph = generate_er(NullModelConfig(n=n, m=m, seed=5))
    indeg = np.bincount(graph.dst, minlength=n)
    observed = np.bincount(indeg)
    lam = m / n
    # lump the tail so every expected cell is >= 5
    k_max = len(observed) - 1
    pmf = stats.poisson.pmf(np.arange(k_max + 1), lam)
    expected = pmf * n
    while expected[-1] < 5:
        expected[-2] += expected[-1]
        observed_last = observed[-1]
        observed = observed[:-1].copy()
        observed[-1] += observed_last
        expected = expected[:-1]
    expected[-1] += n - expected.sum()  # remaining tail mass
    chi2, p = stats.chisquare(observed, expected)
    assert p > 0.001


# ---------------------------------------------------------------------------
# value assignment


def test_values_constant_pool():
    graph = generate_er(NullModelConfig(n=50, m=200, seed=3))
    valued = assign_sampled_values(graph, [5], seed=3)
    assert (valued.value == 5).all()


def test_values_two_point_pool_fraction():
    graph = generate_er(NullModelConfig(n=2000, m=100_000, seed=4))
    valued = assign_sampled_values(graph, [1, 2], seed=4)
    frac_ones = (valued.value == 1).mean()
    assert 0.48 <= frac_ones <= 0.52


def test_values_deterministic_per_seed():
    graph = generate_er(NullModelConfig(n=100, m=400, seed=6))
    a = assign_sampled_values(graph, [1, 5, 9, 13], seed=42)
    b = assign_sampled_values(graph, [1, 5, 9, 13], seed=42)
    assert (a.value == b.value).all()


def test_values_empty_pool_rejected():
    graph = generate_er(NullModelConfig(n=10, m=5, seed=1))
    with pytest.raises(ValueError):
        assign_sampled_values(graph, [], seed=1)


# ---------------------------------------------------------------------------
# thresholds


def test_nearest_rank_1_to_100():
    values = np.arange(1, 101)
    assert nearest_rank_percentile(values, 0.99) == 99
    assert (values > 99).sum() == 1  # only the value 100 is significant


def test_all_equal_metrics_mean_nothing_significant():
    values = np.full(500, 7)
    threshold = nearest_rank_percentile(values, 0.99)
    assert threshold == 7
    assert (values > threshold).sum() == 0


def test_thresholds_match_sorted_percentile_oracle():
    rng = np.random.default_rng(12)
    for seed in range(3):
        graph = generate_er(NullModelConfig(n=3000, m=9000, seed=seed))
        graph = assign_sampled_values(graph, rng.integers(1, 10**7, size=500), seed=seed)
        thresholds = compute_thresholds(graph, 0.01)
        metrics = threshold_metrics(node_metrics(graph))
        for name, values in metrics.items():
            assert getattr(thresholds, name) == oracles.nearest_rank(values.tolist(), 0.99)


def test_thresholds_monotone_in_p_value():
    graph = generate_er(NullModelConfig(n=5000, m=15000, seed=9))
    graph = assign_sampled_values(graph, [10, 20, 30, 40, 1000], seed=9)
    cuts = [compute_thresholds(graph, p).as_dict() for p in (0.001, 0.01, 0.05, 0.2)]
    for name in cuts[0]:
        series = [c[name] for c in cuts]
        assert series == sorted(series, reverse=True)


def test_degree_thresholds_depend_only_on_density():
    base = []
    doubled = []
    for seed in range(3):
        g1 = generate_er(NullModelConfig(n=30_000, m=80_000, seed=seed))
        g2 = generate_er(NullModelConfig(n=60_000, m=160_000, seed=seed))
        base.append(compute_thresholds(g1, 0.01).in_degree)
        doubled.append(compute_thresholds(g2, 0.01).in_degree)
    for b, d in zip(base, doubled):
        assert abs(b - d) <= 1


def test_threshold_needs_enough_nodes():
    graph = generate_er(NullModelConfig(n=50, m=100, seed=2))
    with pytest.raises(ValueError):
        compute_thresholds(graph, 0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        NullModelConfig(n=1, m=0)
    with pytest.raises(ValueError):
        NullModelConfig(n=10, m=5, p_value=0.0)
    with pytest.raises(ValueError):
        NullModelConfig(n=10, m=5, p_value=1.0)


def test_reference_constants_recorded():
    ref = REFERENCE_THRESHOLDS_APRIL_2013
    assert ref["in_degree"] == 7 and ref["out_degree"] == 7
    assert ref["in_minus_out_degree"] == 5 and ref["out_minus_in_degree"] == 5
    assert ref["out_minus_in_value_btc"] == pytest.approx(432.0260)
    assert int(ref["in_value_btc"] * SATOSHI_PER_BTC) == 44436810000


def test_threshold_report_round_trip(tmp_path):
    config = NullModelConfig(n=3000, m=9000, p_value=0.01, seed=7)
    graph = assign_sampled_values(generate_er(config), [5, 10], seed=7)
    thresholds = compute_thresholds(graph, config.p_value)
    path = tmp_path / "thresholds.csv"
    write_thresholds_csv(thresholds, path, config=config)
    text = path.read_text()
    assert "# seed=7" in text and "# rng_name=numpy-pcg64" in text
    assert read_thresholds_csv(path) == thresholds
