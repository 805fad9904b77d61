"""Genre-level attribution of miscalibration and genre popularity profiles.

A user's MC score is assigned to every genre occurring in their
training-fold profile; per group and genre the scores are averaged, and
each (algorithm, dataset) panel is min-max normalized to [0, 1] across all
of its group/genre cells. Genres are always emitted in descending overall
rating-count popularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import GenreCatalog, GroupAssignment, RatingTable


def genre_order(rating_counts_total: np.ndarray) -> np.ndarray:
    """Genre indices sorted by descending total rating count, ties broken
    by ascending genre index."""
    n = rating_counts_total.size
    return np.lexsort((np.arange(n), -rating_counts_total))


@dataclass(eq=False)
class GenrePopularityProfile:
    """Per (group, genre): rating count and distinct-user count.

    An item with several genres counts once per genre, so the per-group
    rating counts sum to at least the group's number of ratings.
    """

    rating_count: np.ndarray    # (n_groups, n_genres) int
    user_count: np.ndarray      # (n_groups, n_genres) int
    order: np.ndarray           # genre emission order


def genre_popularity(table: RatingTable, catalog: GenreCatalog,
                     groups: GroupAssignment) -> GenrePopularityProfile:
    """Count ratings and distinct users per group and genre."""
    n_groups, n_genres = groups.n_groups, catalog.n_genres
    rating_count = np.zeros((n_groups, n_genres), dtype=np.int64)
    user_seen = np.zeros((table.n_users, n_genres), dtype=bool)
    item_group = groups.group[table.users]
    for (i, g) in zip(table.items.tolist(), item_group.tolist()):
        rating_count[g, catalog.item_genres[i]] += 1
    for (u, i) in zip(table.users.tolist(), table.items.tolist()):
        user_seen[u, catalog.item_genres[i]] = True
    user_count = np.zeros((n_groups, n_genres), dtype=np.int64)
    for g in range(n_groups):
        user_count[g] = user_seen[groups.members(g)].sum(axis=0)
    order = genre_order(rating_count.sum(axis=0))
    return GenrePopularityProfile(rating_count=rating_count,
                                  user_count=user_count, order=order)


@dataclass(eq=False)
class GenreAttribution:
    """Per-group, per-genre mean MC for one algorithm.

    ``raw`` holds the plain means (NaN where no user of the group touched
    the genre); ``normalized`` is the panel-wide min-max rescale of ``raw``
    into [0, 1] (a constant panel collapses to 0 by convention).
    """

    algorithm: str
    raw: np.ndarray           # (n_groups, n_genres), NaN = missing
    normalized: np.ndarray
    order: np.ndarray
    group_labels: tuple


def mc_sums_by_genre(mc_by_user: np.ndarray, profile_genres: np.ndarray,
                     groups: GroupAssignment) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate one fold's MC mass per (group, genre).

    Returns (sums, counts); a user contributes their MC score to genre c
    exactly when c occurs in their training profile and their MC is defined.
    """
    n_groups = groups.n_groups
    n_genres = profile_genres.shape[1]
    sums = np.zeros((n_groups, n_genres))
    counts = np.zeros((n_groups, n_genres), dtype=np.int64)
    defined = ~np.isnan(mc_by_user)
    for g in range(n_groups):
        members = groups.members(g)
        members = members[defined[members]]
        mask = profile_genres[members]
        counts[g] = mask.sum(axis=0)
        sums[g] = (mask * mc_by_user[members, None]).sum(axis=0)
    return sums, counts


def normalize_panel(raw: np.ndarray) -> np.ndarray:
    """Min-max rescale a panel to [0, 1], ignoring NaN cells.

    A degenerate panel (min equals max) maps every defined cell to 0.
    """
    out = np.full_like(raw, np.nan)
    defined = ~np.isnan(raw)
    if not defined.any():
        return out
    lo = raw[defined].min()
    hi = raw[defined].max()
    if hi == lo:
        out[defined] = 0.0
    else:
        out[defined] = (raw[defined] - lo) / (hi - lo)
    return out


def attribute_mc(mc_by_user, profiles, catalog: GenreCatalog,
                 groups: GroupAssignment, algorithm: str = "",
                 order: np.ndarray | None = None) -> GenreAttribution:
    """Attribute per-user MC scores to the genres of their profiles.

    ``mc_by_user`` maps user index to MC (NaN or missing users are
    skipped); ``profiles`` maps user index to the items of their
    training-fold profile. Panel normalization happens across all groups
    and genres of this single attribution.
    """
    n_users = groups.group.size
    mc = np.full(n_users, np.nan)
    if isinstance(mc_by_user, dict):
        for u, v in mc_by_user.items():
            mc[u] = v
    else:
        mc[:] = np.asarray(mc_by_user, dtype=np.float64)
    profile_genres = np.zeros((n_users, catalog.n_genres), dtype=bool)
    for u in range(n_users):
        items = profiles.get(u, ()) if isinstance(profiles, dict) else profiles[u]
        for i in items:
            profile_genres[u, catalog.item_genres[i]] = True
    sums, counts = mc_sums_by_genre(mc, profile_genres, groups)
    raw = np.divide(sums, counts, out=np.full_like(sums, np.nan), where=counts > 0)
    if order is None:
        order = np.arange(catalog.n_genres)
    return GenreAttribution(algorithm=algorithm, raw=raw,
                            normalized=normalize_panel(raw), order=order,
                            group_labels=groups.labels)


def select_display_genres(attribution: GenreAttribution, max_genres: int,
                          popularity_key: np.ndarray) -> list[int]:
    """Keep the genres with the largest cross-group spread of normalized MC.

    ``popularity_key`` (total rating count per genre) breaks ties in favour
    of more popular genres, then lower genre index. Returns the selected
    genre indices in selection-priority order.
    """
    norm = attribution.normalized
    n_genres = norm.shape[1]
    spread = np.zeros(n_genres)
    for c in range(n_genres):
        col = norm[:, c]
        col = col[~np.isnan(col)]
        spread[c] = col.max() - col.min() if col.size else -np.inf
    order = np.lexsort((np.arange(n_genres), -popularity_key, -spread))
    return order[:max_genres].tolist()
