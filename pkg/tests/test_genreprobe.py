import numpy as np
import pytest

from recaudit.corpus import GroupAssignment, compute_popularity, group_labels, split_user_groups
from recaudit.genreprobe import (GenreAttribution, attribute_mc,
                                 genre_popularity, normalize_panel,
                                 select_display_genres)

from conftest import make_catalog, make_table


def assignment(groups_list):
    group = np.asarray(groups_list, dtype=np.int8)
    n_groups = int(group.max()) + 1
    return GroupAssignment(group=group, fraction=np.linspace(0, 1, group.size),
                           labels=group_labels(n_groups))


def catalog_of(n_items, genre_of):
    table = make_table([(0, i, 3.0) for i in range(n_items)])
    return make_catalog(table, {i: set(genre_of(i)) for i in range(n_items)})


class TestAttributeMc:

    def test_shared_single_genre_degenerates_to_zero(self):
        catalog = catalog_of(2, lambda i: {"rock"})
        groups = assignment([0, 0, 1, 1])
        mc = {0: 0.2, 1: 0.4, 2: 0.6, 3: 0.8}
        profiles = {u: [0, 1] for u in range(4)}
        att = attribute_mc(mc, profiles, catalog, groups)
        assert att.raw[0, 0] == pytest.approx(0.3)
        assert att.raw[1, 0] == pytest.approx(0.7)
        single = attribute_mc({0: 0.2, 1: 0.4}, {0: [0], 1: [0]}, catalog,
                              assignment([0, 0]))
        assert single.normalized[0, 0] == 0.0    # min == max panel

    def test_minmax_endpoints(self):
        catalog = catalog_of(2, lambda i: {["a", "b"][i]})
        groups = assignment([0, 0])
        att = attribute_mc({0: 0.4, 1: 0.8}, {0: [0], 1: [1]}, catalog, groups)
        a, b = catalog.genre_names.index("a"), catalog.genre_names.index("b")
        assert att.normalized[0, a] == 0.0
        assert att.normalized[0, b] == 1.0

    def test_contributes_only_to_profile_genres(self):
        catalog = catalog_of(3, lambda i: {["a", "b", "c"][i]})
        groups = assignment([0, 0])
        att = attribute_mc({0: 0.5, 1: 0.9}, {0: [0, 1], 1: [1]}, catalog, groups)
        a = catalog.genre_names.index("a")
        b = catalog.genre_names.index("b")
        c = catalog.genre_names.index("c")
        assert att.raw[0, a] == pytest.approx(0.5)
        assert att.raw[0, b] == pytest.approx(0.7)
        assert np.isnan(att.raw[0, c])          # nobody touched genre c

    def test_additive_shift_covariance(self):
        catalog = catalog_of(3, lambda i: {["a", "b", "b"][i]})
        groups = assignment([0, 1, 1])
        mc = {0: 0.3, 1: 0.5, 2: 0.9}
        profiles = {0: [0, 1], 1: [1], 2: [2]}
        base = attribute_mc(mc, profiles, catalog, groups)
        shifted = attribute_mc({u: v + 1.7 for u, v in mc.items()},
                               profiles, catalog, groups)
        defined = ~np.isnan(base.raw)
        assert np.allclose(shifted.raw[defined], base.raw[defined] + 1.7)
        assert np.allclose(shifted.normalized[defined], base.normalized[defined])

    def test_undefined_mc_users_skipped(self):
        catalog = catalog_of(1, lambda i: {"a"})
        groups = assignment([0, 0])
        att = attribute_mc({0: 0.4, 1: float("nan")}, {0: [0], 1: [0]},
                           catalog, groups)
        assert att.raw[0, 0] == pytest.approx(0.4)


class TestGenrePopularity:

    def test_multi_genre_item_counts_once_per_genre(self):
        table = make_table([(0, 0, 4.0)])
        catalog = make_catalog(table, {0: {"a", "b"}})
        prof = genre_popularity(table, catalog, assignment([0]))
        assert prof.rating_count.tolist() == [[1, 1]]
        assert prof.user_count.tolist() == [[1, 1]]

    def test_group_without_genre(self):
        table = make_table([(0, 0, 4.0), (1, 1, 2.0)])
        catalog = make_catalog(table, {0: {"a"}, 1: {"b"}})
        prof = genre_popularity(table, catalog, assignment([0, 1]))
        b = catalog.genre_names.index("b")
        assert prof.rating_count[0, b] == 0
        assert prof.user_count[0, b] == 0

    def test_order_most_popular_first(self):
        records = [(u, 0, 3.0) for u in range(5)]          # genre a: 5 ratings
        records += [(u, 1, 3.0) for u in range(3)]         # genre b: 3
        records += [(0, 2, 3.0)]                           # genre c: 1
        table = make_table(records)
        catalog = make_catalog(table, {0: {"a"}, 1: {"b"}, 2: {"c"}})
        prof = genre_popularity(table, catalog, assignment([0] * 5))
        names = [catalog.genre_names[g] for g in prof.order]
        assert names == ["a", "b", "c"]


class TestSelectDisplayGenres:

    def make_attribution(self, normalized):
        normalized = np.asarray(normalized, dtype=np.float64)
        return GenreAttribution(algorithm="A", raw=normalized.copy(),
                                normalized=normalized,
                                order=np.arange(normalized.shape[1]),
                                group_labels=("LowPop", "MedPop"))

    def test_keeps_largest_ranges(self):
        att = self.make_attribution([[0.0, 0.2, 0.5], [1.0, 0.3, 0.5]])
        pop_key = np.array([10, 20, 30])
        assert select_display_genres(att, 2, pop_key) == [0, 1]

    def test_all_kept_when_fewer_than_max(self):
        att = self.make_attribution([[0.0, 1.0], [0.5, 0.2]])
        assert len(select_display_genres(att, 10, np.array([1, 2]))) == 2

    def test_range_tie_broken_by_popularity(self):
        att = self.make_attribution([[0.0, 0.0], [0.4, 0.4]])
        assert select_display_genres(att, 1, np.array([5, 9])) == [1]

    def test_normalize_panel_handles_all_nan(self):
        out = normalize_panel(np.full((2, 2), np.nan))
        assert np.isnan(out).all()
