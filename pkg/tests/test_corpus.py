import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recaudit.corpus import (compute_popularity, dataset_stats,
                             implicit_to_explicit, load_dataset,
                             normalize_playcounts, split_user_groups,
                             write_dataset)
from recaudit.errors import ConfigError, DatasetError, LoadError

from conftest import make_catalog, make_table


def write_files(tmp_path, ratings_rows, genres_rows, delimiter=","):
    rp = tmp_path / "ratings.csv"
    gp = tmp_path / "genres.csv"
    rp.write_text("\n".join([delimiter.join(map(str, r)) for r in ratings_rows]) + "\n")
    gp.write_text("\n".join([delimiter.join(map(str, g)) for g in genres_rows]) + "\n")
    return rp, gp


class TestLoadDataset:

    def test_singleton(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 0, 4.0)],
                             [("item", "genres"), (0, "rock")])
        table, catalog, report = load_dataset(rp, gp, "explicit")
        assert table.n_ratings == 1
        assert table.n_users == 1 and table.n_items == 1
        assert catalog.n_genres == 1
        assert catalog.genre_names == ("rock",)
        assert report.dropped_ratings == 0

    def test_items_without_genres_dropped(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"),
                              (0, 0, 4.0), (0, 1, 3.0), (1, 1, 2.0), (1, 0, 5.0)],
                             [("item", "genres"), (0, "rock")])
        table, catalog, report = load_dataset(rp, gp, "explicit")
        assert report.dropped_items == 1
        assert report.dropped_ratings == 2
        assert table.n_items == 1
        assert table.n_ratings == 2

    def test_malformed_row_reports_line(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 0, 4.0), ("x", 1, "bad")],
                             [("item", "genres"), (0, "rock"), (1, "pop")])
        with pytest.raises(LoadError) as exc:
            load_dataset(rp, gp, "explicit")
        assert ":3:" in str(exc.value)

    def test_empty_after_filtering(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 5, 4.0)],
                             [("item", "genres"), (0, "rock")])
        with pytest.raises(DatasetError):
            load_dataset(rp, gp, "explicit")

    def test_duplicate_pair_rejected(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 0, 4.0), (0, 0, 3.0)],
                             [("item", "genres"), (0, "rock")])
        with pytest.raises(DatasetError, match="duplicate"):
            load_dataset(rp, gp, "explicit")

    def test_playcount_schema_scales_per_user(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "count"),
                              (0, 0, 2), (0, 1, 51), (0, 2, 100), (1, 0, 7)],
                             [("item", "genres"), (0, "a"), (1, "b"), (2, "c")])
        table, _, _ = load_dataset(rp, gp, "playcount")
        assert table.rating_range == (1.0, 1000.0)
        vals = {(int(table.user_ids[u]), int(table.item_ids[i])): v
                for u, i, v in zip(table.users, table.items, table.values)}
        assert vals[(0, 0)] == 1.0
        assert vals[(0, 1)] == 500.5
        assert vals[(0, 2)] == 1000.0
        assert vals[(1, 0)] == 1000.0     # constant profile maps to the top

    def test_mixed_schema_fills_implicit(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating", "implicit"),
                              (0, 0, 3.0, 0), (0, 1, 0.0, 1), (1, 0, 9.0, "false")],
                             [("item", "genres"), (0, "a"), (1, "b")])
        table, _, report = load_dataset(rp, gp, "mixed", rating_range=(1, 10))
        assert report.implicit_converted == 1
        vals = {(int(table.user_ids[u]), int(table.item_ids[i])): v
                for u, i, v in zip(table.users, table.items, table.values)}
        assert vals[(0, 1)] == 5.0
        assert vals[(0, 0)] == 3.0 and vals[(1, 0)] == 9.0

    def test_custom_delimiter(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 0, 4.0)],
                             [("item", "genres"), (0, "rock")],
                             delimiter=";")
        table, _, _ = load_dataset(rp, gp, "explicit", delimiter=";")
        assert table.n_ratings == 1

    def test_out_of_range_rating_rejected(self, tmp_path):
        rp, gp = write_files(tmp_path,
                             [("user", "item", "rating"), (0, 0, 9.0)],
                             [("item", "genres"), (0, "rock")])
        with pytest.raises(DatasetError, match="outside"):
            load_dataset(rp, gp, "explicit", rating_range=(1, 5))


class TestNormalizePlaycounts:

    def test_three_point_profile(self):
        out = normalize_playcounts({0: {"a": 2, "b": 51, "c": 100}}, (1, 1000))
        assert out[0] == {"a": 1.0, "b": 500.5, "c": 1000.0}

    def test_constant_profile_maps_to_top(self):
        out = normalize_playcounts({0: {"a": 7}}, (1, 1000))
        assert out[0] == {"a": 1000.0}

    def test_users_scaled_independently(self):
        out = normalize_playcounts(
            {0: {"a": 1, "b": 10}, 1: {"a": 1000, "b": 9000}}, (1, 1000))
        assert out[0]["a"] == 1.0 and out[0]["b"] == 1000.0
        assert out[1]["a"] == 1.0 and out[1]["b"] == 1000.0

    def test_bad_target_range(self):
        with pytest.raises(ConfigError):
            normalize_playcounts({0: {"a": 1}}, (5, 5))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(min_value=1, max_value=10_000),
                    min_size=2, max_size=30, unique=True))
    def test_monotone_per_user(self, counts):
        out = normalize_playcounts({0: {i: c for i, c in enumerate(counts)}},
                                   (1, 1000))[0]
        order = sorted(range(len(counts)), key=counts.__getitem__)
        scaled = [out[i] for i in order]
        assert all(a < b for a, b in zip(scaled, scaled[1:]))
        assert all(1.0 <= v <= 1000.0 for v in scaled)


class TestImplicitToExplicit:

    def test_flagged_entries_filled(self):
        out = implicit_to_explicit([3.0, 0.0, 4.0], [False, True, False], 5.0, (1, 10))
        assert out.tolist() == [3.0, 5.0, 4.0]

    def test_noop_without_implicit(self):
        out = implicit_to_explicit([3.0, 4.0], [False, False], 5.0, (1, 10))
        assert out.tolist() == [3.0, 4.0]

    def test_all_implicit(self):
        out = implicit_to_explicit([0.0, 0.0], [True, True], 5.0, (1, 10))
        assert out.tolist() == [5.0, 5.0]

    def test_fill_outside_range(self):
        with pytest.raises(ConfigError):
            implicit_to_explicit([3.0], [True], 42.0, (1, 10))


class TestPopularity:

    def test_fraction_of_users(self):
        records = [(u, 0, 3.0) for u in range(10)]
        records += [(u, 1, 3.0) for u in range(100)]
        table = make_table(records)
        pop = compute_popularity(table)
        assert pop.popularity[0] == pytest.approx(0.10)
        assert pop.popularity[1] == 1.0

    def test_equal_popularity_tie_break(self):
        records = [(u, i, 3.0) for u in range(4) for i in range(10)]
        table = make_table(records)
        pop = compute_popularity(table)
        assert np.allclose(pop.popularity, 1.0)
        assert pop.popular_set == {0, 1}       # ceil(0.2 * 10) = 2, lowest ids

    def test_universally_rated_item(self):
        records = [(u, 0, 3.0) for u in range(5)] + [(0, 1, 3.0)]
        table = make_table(records)
        pop = compute_popularity(table)
        assert 0 in pop.popular_set
        assert pop.popularity[0] == 1.0


class TestGroups:

    def test_three_users_one_per_group(self):
        # 16 items -> ceil(0.2 * 16) = 4 popular: {0, 1, 2, 3}
        records = [(0, 0, 3.0), (1, 0, 3.0), (2, 0, 3.0), (1, 1, 3.0), (2, 1, 3.0),
                   (2, 2, 3.0), (2, 3, 3.0), (2, 30, 3.0)]
        records += [(0, i, 3.0) for i in range(10, 19)]
        records += [(1, 20, 3.0), (1, 21, 3.0)]
        table = make_table(records)
        pop = compute_popularity(table)
        groups = split_user_groups(table, pop)
        assert groups.fraction.tolist() == [0.1, 0.5, 0.8]
        assert groups.group.tolist() == [0, 1, 2]
        assert groups.sizes().tolist() == [1, 1, 1]

    def test_all_popular_profile_lands_high(self):
        records = [(u, 0, 3.0) for u in range(3)]
        records += [(0, i, 3.0) for i in range(1, 6)] + [(1, 1, 3.0)]
        table = make_table(records)
        pop = compute_popularity(table)
        groups = split_user_groups(table, pop)
        assert groups.fraction[2] == 1.0
        assert groups.group[2] == 2
        assert groups.labels[2] == "HighPop"

    def test_sizes_within_one(self):
        records = [(u, u % 7, float(1 + u % 5)) for u in range(50)]
        records += [(u, 7 + (u % 13), 3.0) for u in range(50)]
        table = make_table(records)
        groups = split_user_groups(table, compute_popularity(table))
        sizes = groups.sizes()
        assert sizes.sum() == 50
        assert sizes.max() - sizes.min() <= 1

    def test_sorted_boundaries(self):
        rng = np.random.default_rng(3)
        records = [(u, i, 3.0) for u in range(30) for i in
                   rng.choice(40, size=rng.integers(2, 10), replace=False)]
        table = make_table(records)
        groups = split_user_groups(table, compute_popularity(table))
        for g in range(groups.n_groups - 1):
            assert groups.fraction[groups.members(g)].max() <= \
                groups.fraction[groups.members(g + 1)].min()

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        records = [(u, i, float(rng.integers(1, 6))) for u in range(20)
                   for i in rng.choice(25, size=rng.integers(2, 8), replace=False)]
        table_a = make_table(list(records))
        shuffled = list(records)
        rng.shuffle(shuffled)
        table_b = make_table(shuffled)
        ga = split_user_groups(table_a, compute_popularity(table_a))
        gb = split_user_groups(table_b, compute_popularity(table_b))
        assert np.array_equal(ga.group, gb.group)
        assert np.array_equal(ga.fraction, gb.fraction)

    def test_rating_weighted_basis(self):
        # user 0: popular item rated 9, unpopular rated 1 -> weighted 0.9
        records = [(0, 0, 9.0), (0, 1, 1.0), (1, 0, 5.0), (2, 0, 5.0),
                   (1, 2, 5.0), (2, 3, 5.0), (1, 3, 1.0)]
        table = make_table(records)
        pop = compute_popularity(table)
        items = split_user_groups(table, pop, basis="items")
        weighted = split_user_groups(table, pop, basis="ratings")
        assert items.fraction[0] == 0.5
        assert weighted.fraction[0] == pytest.approx(0.9)

    def test_fraction_matches_definition(self):
        rng = np.random.default_rng(5)
        records = [(u, i, 3.0) for u in range(12)
                   for i in rng.choice(30, size=rng.integers(1, 9), replace=False)]
        table = make_table(records)
        pop = compute_popularity(table)
        groups = split_user_groups(table, pop)
        for u in range(table.n_users):
            items = table.user_items(u)
            expected = np.mean([i in pop.popular_set for i in items.tolist()])
            assert groups.fraction[u] == pytest.approx(expected)
        assert np.all((groups.fraction >= 0) & (groups.fraction <= 1))


class TestStats:

    def test_dense_two_by_two(self):
        table = make_table([(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)])
        catalog = make_catalog(table, {0: {"a"}, 1: {"b"}})
        stats = dataset_stats(table, catalog)
        assert stats["sparsity"] == 0.0
        assert stats["n_genres"] == 2

    def test_sparse_single_rating(self):
        from recaudit.corpus import RatingTable
        # 2x2 universe holding a single rating
        table = RatingTable(
            user_ids=np.array([0, 1]), item_ids=np.array([0, 1]),
            users=np.array([0]), items=np.array([0]), values=np.array([4.0]),
            rating_min=1.0, rating_max=5.0)
        catalog = make_catalog(table, {0: {"a"}, 1: {"a"}})
        assert dataset_stats(table, catalog)["sparsity"] == 0.75

    def test_roundtrip_reload_identical(self, tmp_path, tiny_dataset):
        table, catalog = tiny_dataset
        rp, gp = tmp_path / "r.csv", tmp_path / "g.csv"
        write_dataset(table, catalog, rp, gp)
        table2, catalog2, _ = load_dataset(rp, gp, "explicit",
                                           rating_range=table.rating_range)
        assert dataset_stats(table, catalog) == dataset_stats(table2, catalog2)
        assert np.array_equal(table.values, table2.values)
        ga = split_user_groups(table, compute_popularity(table))
        gb = split_user_groups(table2, compute_popularity(table2))
        assert np.array_equal(ga.fraction, gb.fraction)

    def test_sparsity_bounds(self, tiny_dataset):
        table, catalog = tiny_dataset
        s = dataset_stats(table, catalog)["sparsity"]
        assert 0 <= s < 1
