import numpy as np
import pytest

import bundlembed as be


def test_generate_shapes():
    aob = be.generate("aob", seed=1)
    assert len(aob) == 3
    assert all(a.shape == (214, 2) for a in aob)
    gh = be.generate("grid-helix", seed=1, n_points=1600)
    assert [a.shape for a in gh] == [(1600, 3), (1600, 3)]
    with pytest.raises(ValueError):
        be.generate("nope")


def test_simulate_tuple_counts():
    truth = be.generate("ao", seed=2)
    bundles = be.simulate(truth, n_queries=600, seed=2)
    assert len(bundles) == 1200
    assert be.total_tuples(bundles) == 228000
    assert {b.source_aspect for b in bundles} == {0, 1}


def test_noise_is_exact():
    truth = be.generate("ao", seed=3)
    clean = be.simulate(truth, n_queries=30, seed=3)
    noisy = be.simulate(truth, n_queries=30, seed=3, noise=0.2)
    flips = sum(a.theta != b.theta for x, y in zip(clean, noisy) for a, b in zip(x.tuples, y.tuples))
    assert flips == round(0.2 * be.total_tuples(clean))


def test_bundle_construction():
    b = be.Bundle(0, [1, 2, 3], [[1, 2], [3]])
    assert [(t.i, t.j, t.theta) for t in b.tuples] == [(1, 2, 1), (1, 3, 0), (2, 3, 0)]
    with pytest.raises(ValueError):
        be.Bundle(0, [1, 2, 3], [[1, 2]])


def test_optimize_and_evaluate():
    truth = be.generate("ao", seed=4)
    bundles = be.simulate(truth, n_queries=200, seed=4)
    cfg = be.OptimConfig()
    cfg.seed = 4
    cfg.iterations = 60
    res = be.optimize(bundles, 214, cfg)
    assert len(res.loss) == 60
    assert res.loss[-1] < res.loss[0]
    alpha = res.weights.alpha
    assert alpha.shape == (400, 2)
    np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
    score = be.ndcg(res.embedding, truth)
    assert 0.0 <= score["mean"] <= 1.0
    assert sorted(score["mapping"]) == [0, 1]
    assert 0.0 < be.affiliation_uncertainty(res.weights) < 1.0

    nb = be.optimize(bundles, 214, cfg, mode="nonbundled")
    assert nb.weights.alpha.shape[0] == be.total_tuples(bundles)


def test_metric_examples():
    truth = be.generate("ao", seed=5)
    assert be.ndcg(truth, truth)["mean"] == pytest.approx(1.0)
    assert be.ndcg(truth[::-1], truth)["mapping"] == [1, 0]
    w = be.Weights.from_beta(np.zeros((4, 2)))
    assert be.affiliation_uncertainty(w) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        be.affiliation_uncertainty(be.Weights.from_beta(np.zeros((1, 3))))
    triplets = be.sample_triplets(truth, 300, seed=1)
    assert triplets.shape == (300, 3)
    assert be.generalization_error(triplets, truth) == 0.0
    assert be.generalization_error(triplets[:, [0, 2, 1]], truth[:1]) > 0.0


def test_triplet_bundles():
    b = be.bundles_from_triplets(np.array([[1, 2, 3], [4, 5, 6]]))
    assert len(b) == 2
    assert [(t.i, t.j, t.theta) for t in b[0].tuples] == [(1, 2, 1), (1, 3, 0)]


def test_file_round_trip(tmp_path):
    truth = be.generate("ao", seed=6)
    be.write_tables(str(tmp_path / "t.csv"), truth)
    back = be.read_tables(str(tmp_path / "t.csv"))
    for a, b in zip(truth, back):
        np.testing.assert_array_equal(a, b)
    bundles = be.simulate(truth, n_queries=5, seed=6, noise=0.1)
    be.write_bundles(str(tmp_path / "b.jsonl"), bundles)
    assert be.read_bundles(str(tmp_path / "b.jsonl")) == bundles
