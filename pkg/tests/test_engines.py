import json

import numpy as np
import pytest

from recaudit.engines import (ALGORITHMS, ENGINES, HyperParams, TrainData,
                              fit, load_model, save_model)
from recaudit.engines.knn import similarity_matrix
from recaudit.errors import ConfigError, EngineError

from conftest import make_table


def train_from(records, rating_range=(1.0, 10.0)):
    table = make_table(records, rating_range)
    return TrainData.from_table(table), table


class TestHyperParams:

    def test_defaults_follow_reference_settings(self):
        hp = HyperParams()
        assert (hp.knn_k, hp.knn_min_k, hp.similarity) == (40, 1, "msd")
        assert (hp.nmf_factors, hp.nmf_epochs, hp.nmf_reg) == (15, 50, 0.06)
        assert (hp.cc_user_clusters, hp.cc_item_clusters, hp.cc_epochs) == (3, 3, 20)
        assert (hp.bias_reg_item, hp.bias_reg_user, hp.bias_epochs) == (10.0, 15.0, 10)

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            HyperParams(knn_k=0)
        with pytest.raises(ConfigError):
            HyperParams(nmf_reg=-1)
        with pytest.raises(ConfigError):
            HyperParams(similarity="jaccard")


class TestUserItemAvg:

    def test_additive_prediction(self):
        # mu=3.0, b_u=0.5, b_i=-0.2 -> 3.3, via the serialized form
        d = {"algorithm": "UserItemAvg",
             "hyperparams": HyperParams().to_dict(),
             "n_users": 1, "n_items": 1, "clip_range": [1.0, 5.0], "mu": 3.0,
             "params": {"user_bias": [0.5], "item_bias": [-0.2],
                        "known_users": [1], "known_items": [1]}}
        model = ENGINES["UserItemAvg"].from_dict(d)
        assert model.predict(0, 0) == pytest.approx(3.3, abs=1e-12)

    def test_zero_reg_single_rating_exact(self):
        train, _ = train_from([(0, 0, 4.0)])
        hp = HyperParams(bias_reg_user=0.0, bias_reg_item=0.0)
        model = fit("UserItemAvg", train, hp)
        assert model.predict(0, 0) == 4.0

    def test_unseen_user_and_item_gets_mu(self):
        train, _ = train_from([(0, 0, 4.0), (1, 1, 2.0)])
        model = fit("UserItemAvg", train, HyperParams())
        assert model.predict(7, 9) == train.mu
        assert model.predict_detail(7, 9).fallback


def knn_fixture_weighted_average():
    """Two neighbours with msd similarities 0.5 and 0.25 rating the target
    item 4 and 2; target user co-rates enough to pin the similarities."""
    sq5 = np.sqrt(5.0)
    records = [
        (0, 0, 5.0), (0, 1, 5.0),          # target user profile
        (1, 0, 4.0), (1, 2, 4.0),          # neighbour 1: msd 1 -> sim 0.5
        (2, 0, 4.0), (2, 1, 5.0 + sq5), (2, 2, 2.0),   # msd 3 -> sim 0.25
    ]
    return train_from(records)


class TestUserKnn:

    def test_weighted_average_hand_check(self):
        train, _ = knn_fixture_weighted_average()
        sim = similarity_matrix(train, "msd")
        assert sim[0, 1] == pytest.approx(0.5, abs=1e-12)
        assert sim[0, 2] == pytest.approx(0.25, abs=1e-12)
        model = fit("UserKNN", train, HyperParams())
        assert model.predict(0, 2) == pytest.approx(10.0 / 3.0, abs=1e-9)

    def test_mean_centered_hand_check(self):
        # target mean 2.0; neighbour mean 4.0 rates the target item 5.0 with
        # similarity 1.0 -> 2.0 + (5.0 - 4.0) = 3.0
        records = [
            (0, 0, 1.0), (0, 1, 3.0),
            (1, 0, 1.0), (1, 2, 6.0), (1, 3, 5.0),
        ]
        train, _ = train_from(records)
        sim = similarity_matrix(train, "msd")
        assert sim[0, 1] == 1.0
        model = fit("UserKNNAvg", train, HyperParams())
        assert model.predict(0, 3) == pytest.approx(3.0, abs=1e-9)

    def test_equal_neighbour_ratings(self):
        records = [(0, 0, 4.0), (1, 0, 2.0), (2, 0, 7.0),
                   (1, 1, 3.5), (2, 1, 3.5)]
        train, _ = train_from(records)
        model = fit("UserKNN", train, HyperParams())
        assert model.predict(0, 1) == pytest.approx(3.5, abs=1e-12)

    def test_prediction_within_neighbour_range(self):
        rng = np.random.default_rng(4)
        records = [(u, i, float(rng.uniform(1, 10)))
                   for u in range(12) for i in rng.choice(15, 6, replace=False)]
        train, table = train_from(records)
        model = fit("UserKNN", train, HyperParams(knn_k=5))
        for u in range(12):
            for i in range(15):
                raters, ratings = train.item_raters(i)
                if raters.size == 0:
                    continue
                est, fallback = model._estimate(u, i)
                if not fallback:
                    assert ratings.min() - 1e-9 <= est <= ratings.max() + 1e-9

    def test_no_neighbours_falls_back(self):
        records = [(0, 0, 4.0), (1, 1, 2.0)]
        train, _ = train_from(records)
        basic = fit("UserKNN", train, HyperParams())
        avg = fit("UserKNNAvg", train, HyperParams())
        # item 1 is rated only by user 1, who shares no items with user 0
        assert basic.predict_detail(0, 1) == (train.mu, True)
        assert avg.predict_detail(0, 1).value == pytest.approx(4.0)  # user mean
        assert avg.predict_detail(0, 1).fallback

    def test_zero_corated_similarity_zero(self):
        records = [(0, 0, 4.0), (1, 1, 2.0), (2, 0, 3.0), (2, 1, 5.0)]
        train, _ = train_from(records)
        for kind in ("msd", "cosine", "pearson"):
            sim = similarity_matrix(train, kind)
            assert sim[0, 1] == 0.0
            assert np.allclose(sim, sim.T)

    def test_cosine_and_pearson_sanity(self):
        records = [(0, 0, 2.0), (0, 1, 4.0), (1, 0, 1.0), (1, 1, 2.0),
                   (2, 0, 4.0), (2, 1, 2.0)]
        train, _ = train_from(records)
        cos = similarity_matrix(train, "cosine")
        assert cos[0, 1] == pytest.approx(1.0)        # proportional profiles
        pear = similarity_matrix(train, "pearson")
        assert pear[0, 1] == pytest.approx(1.0)
        assert pear[0, 2] == pytest.approx(-1.0)


class TestNMF:

    def test_rank_one_recovery_zero_reg(self):
        p = np.array([1.0, 2.0, 3.0])
        q = np.array([1.0, 1.5, 2.0])
        records = [(u, i, float(p[u] * q[i])) for u in range(3) for i in range(3)]
        train, _ = train_from(records)
        hp = HyperParams(nmf_factors=2, nmf_epochs=200, nmf_reg=0.0, seed=0)
        model = fit("NMF", train, hp)
        trace = model.diagnostics["rmse_per_epoch"]
        assert trace[-1] < 0.05
        assert trace[-1] < trace[0]
        assert min(model.diagnostics["factor_min_per_epoch"]) >= 0.0

    def test_same_seed_bitwise_identical(self):
        rng = np.random.default_rng(1)
        records = [(u, i, float(rng.uniform(1, 5)))
                   for u in range(6) for i in rng.choice(8, 4, replace=False)]
        train, _ = train_from(records)
        hp = HyperParams(nmf_factors=3, nmf_epochs=20, seed=99)
        a = fit("NMF", train, hp)
        b = fit("NMF", train, hp)
        assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)

    def test_unseen_user_gets_mu(self):
        train, _ = train_from([(0, 0, 4.0), (1, 0, 2.0)])
        model = fit("NMF", train, HyperParams(nmf_epochs=5))
        assert model.predict(5, 0) == train.mu

    def test_nonpositive_rating_rejected(self):
        train, _ = train_from([(0, 0, 0.0), (1, 0, 2.0)], rating_range=(0.0, 10.0))
        with pytest.raises(EngineError, match="shift"):
            fit("NMF", train, HyperParams())


class TestCoClustering:

    def test_single_cluster_collapse(self):
        rng = np.random.default_rng(2)
        records = [(u, i, float(rng.integers(1, 6)))
                   for u in range(6) for i in rng.choice(7, 4, replace=False)]
        train, table = train_from(records, rating_range=(-20.0, 20.0))
        hp = HyperParams(cc_user_clusters=1, cc_item_clusters=1, seed=0)
        model = fit("CoClustering", train, hp)
        by_user, by_item = {}, {}
        for u, i, r in zip(table.users.tolist(), table.items.tolist(),
                           table.values.tolist()):
            by_user.setdefault(u, []).append(r)
            by_item.setdefault(i, []).append(r)
        mu = float(np.mean(table.values))
        for u in range(6):
            for i in range(7):
                if i not in by_item:
                    continue
                expected = np.mean(by_user[u]) + np.mean(by_item[i]) - mu
                assert model.predict(u, i) == pytest.approx(expected, abs=1e-9)

    def test_deviations_vanish_at_cluster_means(self):
        # every user and item shares one mean -> prediction is the co-mean
        records = [(u, i, 3.0) for u in range(4) for i in range(4)]
        train, _ = train_from(records)
        model = fit("CoClustering", train, HyperParams(seed=5))
        assert model.predict(0, 0) == pytest.approx(3.0, abs=1e-12)

    def test_fallbacks(self):
        train, _ = train_from([(0, 0, 4.0), (1, 1, 2.0), (1, 0, 3.0)])
        model = fit("CoClustering", train, HyperParams())
        assert model.predict(9, 9) == train.mu
        assert model.predict(9, 0) == pytest.approx(train.item_mean[0])
        assert model.predict(0, 9) == pytest.approx(train.user_mean[0])

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(12)
        mask = rng.random((12, 9)) < 0.7
        uu, ii = np.nonzero(mask)
        records = [(int(u), int(i), float(rng.integers(1, 6)))
                   for u, i in zip(uu, ii)]
        train, _ = train_from(records)
        for seed in range(4):
            model = fit("CoClustering", train,
                        HyperParams(cc_epochs=15, seed=seed))
            objective = model.diagnostics["objective_per_epoch"]
            assert all(b <= a + 1e-9 for a, b in zip(objective, objective[1:]))

    def test_empty_cluster_reseeded(self):
        # identical users collapse into one cluster; the other is re-seeded
        records = [(u, i, 3.0) for u in range(6) for i in range(3)]
        train, _ = train_from(records)
        model = fit("CoClustering", train,
                    HyperParams(cc_user_clusters=2, cc_item_clusters=2, seed=0))
        assert model.diagnostics["empty_cluster_reseeds"] >= 1
        counts = np.bincount(model.user_cluster, minlength=2)
        assert counts.min() >= 1


class TestSharedContract:

    def rand_train(self, seed=0, n_users=10, n_items=12):
        rng = np.random.default_rng(seed)
        records = [(u, i, float(rng.uniform(1, 5)))
                   for u in range(n_users)
                   for i in rng.choice(n_items, 5, replace=False)]
        return train_from(records, rating_range=(1.0, 5.0))

    @pytest.mark.parametrize("algorithm", ALGORITHMS)
    def test_predictions_clipped(self, algorithm):
        train, table = self.rand_train()
        model = fit(algorithm, train, HyperParams(nmf_epochs=10, seed=3))
        for u in (-1, 0, 3, 50):
            for i in (-2, 0, 7, 99):
                value = model.predict(u, i)
                assert table.rating_min <= value <= table.rating_max

    @pytest.mark.parametrize("algorithm", ALGORITHMS)
    def test_deterministic_given_seed(self, algorithm):
        train, _ = self.rand_train(seed=6)
        hp = HyperParams(nmf_epochs=8, seed=11)
        a = fit(algorithm, train, hp)
        b = fit(algorithm, train, hp)
        grid = [(u, i) for u in range(10) for i in range(12)]
        assert [a.predict(*p) for p in grid] == [b.predict(*p) for p in grid]

    @pytest.mark.parametrize("algorithm", ALGORITHMS)
    def test_serialization_roundtrip(self, algorithm, tmp_path):
        train, _ = self.rand_train(seed=9)
        model = fit(algorithm, train, HyperParams(nmf_epochs=8, seed=2))
        path = tmp_path / "model.json"
        save_model(model, path)
        json.loads(path.read_text())          # valid structured text
        loaded = load_model(path)
        grid = [(u, i) for u in range(12) for i in range(14)]
        assert [model.predict(*p) for p in grid] == [loaded.predict(*p) for p in grid]
