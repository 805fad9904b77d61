"""Dataset loading, normalization, popularity scoring, and user grouping.

Input files are header-bearing delimiter-separated text (UTF-8):

* ratings: ``user,item,value[,implicit]`` with one interaction per row,
* genres:  ``item,genre1|genre2|...`` with at least one genre per item.

Items that never appear in the genre file are dropped together with their
ratings, and the drop counts are reported on the load result.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DatasetError, LoadError

log = logging.getLogger(__name__)

SCHEMAS = ("explicit", "playcount", "mixed")
DEFAULT_PLAYCOUNT_RANGE = (1.0, 1000.0)

#: Canonical group labels for the default three-way split.
GROUP_LABELS_3 = ("LowPop", "MedPop", "HighPop")


def group_labels(n_groups: int) -> tuple[str, ...]:
    if n_groups == 3:
        return GROUP_LABELS_3
    return tuple(f"Pop{i}" for i in range(n_groups))


@dataclass(eq=False)
class RatingTable:
    """Immutable user-item-rating store with dense index remappings.

    Ratings are kept sorted by (user, item) so every derived quantity is
    independent of input row order. ``user_ids`` and ``item_ids`` map the
    dense internal indices back to the external identifiers.
    """

    user_ids: np.ndarray      # (n_users,) external id per internal index
    item_ids: np.ndarray      # (n_items,)
    users: np.ndarray         # (n_ratings,) internal user index
    items: np.ndarray         # (n_ratings,) internal item index
    values: np.ndarray        # (n_ratings,) float ratings
    rating_min: float
    rating_max: float
    _user_ptr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.values.size == 0:
            raise DatasetError("rating table is empty")
        if self.rating_min > self.rating_max:
            raise DatasetError(
                f"invalid rating range [{self.rating_min}, {self.rating_max}]")
        # canonical (user, item) order makes everything downstream
        # independent of input row order
        order = np.lexsort((self.items, self.users))
        self.users = self.users[order]
        self.items = self.items[order]
        self.values = self.values[order]
        for arr in (self.user_ids, self.item_ids, self.users, self.items, self.values):
            arr.flags.writeable = False
        lo, hi = self.values.min(), self.values.max()
        if lo < self.rating_min or hi > self.rating_max:
            raise DatasetError(
                f"ratings span [{lo}, {hi}] outside declared range "
                f"[{self.rating_min}, {self.rating_max}]")
        pair_key = self.users.astype(np.int64) * self.n_items + self.items
        dup = np.nonzero(np.diff(pair_key) == 0)[0]
        if dup.size:
            u, i = self.users[dup[0]], self.items[dup[0]]
            raise DatasetError(
                f"duplicate rating for user {self.user_ids[u]} / item {self.item_ids[i]}")
        ptr = np.searchsorted(self.users, np.arange(self.n_users + 1))
        ptr.flags.writeable = False
        self._user_ptr = ptr

    @classmethod
    def from_records(cls, records, rating_range=None):
        """Build a table from (user_id, item_id, rating) triples.

        External ids are remapped to dense indices in ascending id order.
        When ``rating_range`` is None the observed min/max are used.
        """
        records = list(records)
        if not records:
            raise DatasetError("rating table is empty")
        raw_u = np.array([r[0] for r in records], dtype=np.int64)
        raw_i = np.array([r[1] for r in records], dtype=np.int64)
        vals = np.array([r[2] for r in records], dtype=np.float64)
        user_ids, users = np.unique(raw_u, return_inverse=True)
        item_ids, items = np.unique(raw_i, return_inverse=True)
        if rating_range is None:
            rating_range = (float(vals.min()), float(vals.max()))
        return cls(
            user_ids=user_ids,
            item_ids=item_ids,
            users=users.astype(np.int32),
            items=items.astype(np.int32),
            values=vals,
            rating_min=float(rating_range[0]),
            rating_max=float(rating_range[1]),
        )

    @property
    def n_users(self) -> int:
        return int(self.user_ids.size)

    @property
    def n_items(self) -> int:
        return int(self.item_ids.size)

    @property
    def n_ratings(self) -> int:
        return int(self.values.size)

    @property
    def rating_range(self) -> tuple[float, float]:
        return (self.rating_min, self.rating_max)

    def user_slice(self, user: int) -> slice:
        """Slice into the rating arrays covering one user's profile."""
        return slice(int(self._user_ptr[user]), int(self._user_ptr[user + 1]))

    def user_items(self, user: int) -> np.ndarray:
        return self.items[self.user_slice(user)]

    def user_ptr(self) -> np.ndarray:
        return self._user_ptr


@dataclass(eq=False)
class GenreCatalog:
    """Item-to-genres mapping over the table's internal item indices."""

    item_genres: tuple          # per internal item: sorted np.ndarray of genre ids
    genre_names: tuple[str, ...]

    def __post_init__(self):
        for g in self.item_genres:
            if len(g) == 0:
                raise DatasetError("catalog contains an item without genres")

    @property
    def n_items(self) -> int:
        return len(self.item_genres)

    @property
    def n_genres(self) -> int:
        return len(self.genre_names)

    def share_matrix(self) -> np.ndarray:
        """Dense (n_items, n_genres) matrix of per-item genre shares.

        Row i holds 1/|genres(i)| at each of item i's genres, so a row sums
        to one and an interaction's unit weight splits equally over genres.
        """
        if not hasattr(self, "_share"):
            share = np.zeros((self.n_items, self.n_genres))
            for i, genres in enumerate(self.item_genres):
                share[i, genres] = 1.0 / len(genres)
            share.flags.writeable = False
            self._share = share
        return self._share


@dataclass(eq=False)
class PopularityIndex:
    """Per-item popularity plus the popular top-20% set."""

    popularity: np.ndarray    # (n_items,) fraction of users who rated the item
    popular_mask: np.ndarray  # (n_items,) bool

    def __post_init__(self):
        self.popularity.flags.writeable = False
        self.popular_mask.flags.writeable = False

    @classmethod
    def from_interactions(cls, users, items, n_users, n_items, top_fraction=0.2):
        counts = np.bincount(items, minlength=n_items)
        popularity = counts / float(n_users)
        n_popular = math.ceil(top_fraction * n_items)
        # descending popularity, ties broken by ascending item index
        order = np.lexsort((np.arange(n_items), -popularity))
        mask = np.zeros(n_items, dtype=bool)
        mask[order[:n_popular]] = True
        return cls(popularity=popularity, popular_mask=mask)

    @property
    def popular_set(self) -> frozenset:
        return frozenset(np.nonzero(self.popular_mask)[0].tolist())


@dataclass(eq=False)
class GroupAssignment:
    """User partition by inclination toward popular items."""

    group: np.ndarray      # (n_users,) group index, 0 = least popularity-inclined
    fraction: np.ndarray   # (n_users,) fraction of popular items in the profile
    labels: tuple[str, ...]

    def __post_init__(self):
        self.group.flags.writeable = False
        self.fraction.flags.writeable = False

    @property
    def n_groups(self) -> int:
        return len(self.labels)

    def members(self, g: int) -> np.ndarray:
        return np.nonzero(self.group == g)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.n_groups)


class LoadReport(NamedTuple):
    dropped_items: int
    dropped_ratings: int
    implicit_converted: int


class LoadedDataset(NamedTuple):
    table: RatingTable
    catalog: GenreCatalog
    report: LoadReport


def _parse_genres(path, delimiter):
    """Read the genre file into {external item id: set of genre labels}."""
    item_genres: dict[int, set[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise LoadError(path, 1, "empty genre file")
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise LoadError(path, line, f"expected 'item,genres', got {row!r}")
            try:
                item = int(row[0])
            except ValueError:
                raise LoadError(path, line, f"item id {row[0]!r} is not an integer") from None
            genres = {g.strip() for g in row[1].split("|") if g.strip()}
            if not genres:
                raise LoadError(path, line, "item has an empty genre list")
            item_genres.setdefault(item, set()).update(genres)
    if not item_genres:
        raise DatasetError(f"{path}: genre file holds no items")
    return item_genres


def _parse_ratings(path, delimiter, schema):
    """Read the ratings file into (user, item, value, implicit) lists."""
    users, items, values, implicit = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise LoadError(path, 1, "empty ratings file")
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 3:
                raise LoadError(path, line, f"expected at least 3 columns, got {len(row)}")
            try:
                u = int(row[0])
                i = int(row[1])
                v = float(row[2])
            except ValueError:
                raise LoadError(path, line, f"malformed rating row {row!r}") from None
            if not np.isfinite(v):
                raise LoadError(path, line, f"non-finite rating value {row[2]!r}")
            flag = False
            if schema == "mixed":
                if len(row) < 4:
                    raise LoadError(path, line, "mixed schema requires an implicit flag column")
                token = row[3].strip().lower()
                if token in ("1", "true", "yes"):
                    flag = True
                elif token in ("0", "false", "no", ""):
                    flag = False
                else:
                    raise LoadError(path, line, f"implicit flag {row[3]!r} not understood")
            if schema == "playcount" and v < 1:
                raise LoadError(path, line, f"play count {v} is below 1")
            users.append(u)
            items.append(i)
            values.append(v)
            implicit.append(flag)
    if not users:
        raise DatasetError(f"{path}: ratings file holds no rows")
    return (np.array(users, dtype=np.int64), np.array(items, dtype=np.int64),
            np.array(values, dtype=np.float64), np.array(implicit, dtype=bool))


def _minmax_scale_per_user(users, counts, lo, hi):
    """Min-max scale counts to [lo, hi] independently per user.

    Constant profiles map to ``hi``: every item of such a user is also the
    most-consumed one, which anchors the top of the scale.
    """
    order = np.argsort(users, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    sorted_users = users[order]
    sorted_counts = counts[order]
    starts = np.nonzero(np.r_[True, sorted_users[1:] != sorted_users[:-1]])[0]
    mins = np.minimum.reduceat(sorted_counts, starts)
    maxs = np.maximum.reduceat(sorted_counts, starts)
    group_of = np.cumsum(np.r_[0, np.diff(sorted_users) != 0])
    umin = mins[group_of]
    umax = maxs[group_of]
    span = umax - umin
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = lo + (sorted_counts - umin) / span * (hi - lo)
    scaled[span == 0] = hi
    return scaled[inv]


def normalize_playcounts(raw_counts, target_range):
    """Scale per-user play counts onto ``target_range`` by min-max.

    ``raw_counts`` maps user id to an {item id: count} dict; the result has
    the same shape with counts replaced by scaled ratings. Each user is
    normalized independently so every profile spans the full target range.
    """
    lo, hi = float(target_range[0]), float(target_range[1])
    if not lo < hi:
        raise ConfigError(f"target range [{lo}, {hi}] must satisfy lo < hi")
    users, items, counts = [], [], []
    for u, per_item in raw_counts.items():
        for i, c in per_item.items():
            if c < 1:
                raise DatasetError(f"play count {c} for user {u} is below 1")
            users.append(u)
            items.append(i)
            counts.append(float(c))
    if not users:
        return {}
    u_arr = np.array(users)
    scaled = _minmax_scale_per_user(u_arr, np.array(counts), lo, hi)
    out: dict = {}
    for u, i, v in zip(users, items, scaled):
        out.setdefault(u, {})[i] = float(v)
    return out


def implicit_to_explicit(ratings, implicit_mask, fill_value, rating_range):
    """Replace flagged implicit entries with ``fill_value``.

    Explicit entries pass through untouched. The fill value must fall inside
    the declared rating range.
    """
    lo, hi = rating_range
    if not lo <= fill_value <= hi:
        raise ConfigError(
            f"implicit fill value {fill_value} outside rating range [{lo}, {hi}]")
    out = np.array(ratings, dtype=np.float64, copy=True)
    out[np.asarray(implicit_mask, dtype=bool)] = fill_value
    return out


def load_dataset(ratings_path, genres_path, schema, *, delimiter=",",
                 rating_range=None, implicit_fill=5.0) -> LoadedDataset:
    """Load and normalize a dataset from delimiter-separated files.

    ``schema`` selects the interpretation of the value column:

    * ``explicit``  - ratings used as-is,
    * ``playcount`` - per-user min-max scaled onto ``rating_range``
      (default [1, 1000]),
    * ``mixed``     - rows flagged implicit get ``implicit_fill``.

    Items missing from the genre file are dropped along with their ratings;
    the counts land in the returned report.
    """
    if schema not in SCHEMAS:
        raise ConfigError(f"unknown dataset schema {schema!r}, expected one of {SCHEMAS}")
    genre_map = _parse_genres(genres_path, delimiter)
    users, items, values, implicit = _parse_ratings(ratings_path, delimiter, schema)

    keep = np.fromiter((i in genre_map for i in items), dtype=bool, count=items.size)
    dropped_ratings = int((~keep).sum())
    dropped_item_ids = set(items[~keep].tolist())
    if dropped_ratings:
        log.info("dropped %d ratings on %d items without genre entries",
                 dropped_ratings, len(dropped_item_ids))
    users, items, values, implicit = users[keep], items[keep], values[keep], implicit[keep]
    if users.size == 0:
        raise DatasetError("no ratings left after removing items without genres")

    implicit_converted = 0
    if schema == "playcount":
        rng = DEFAULT_PLAYCOUNT_RANGE if rating_range is None else rating_range
        values = _minmax_scale_per_user(users, values, float(rng[0]), float(rng[1]))
        rating_range = rng
    elif schema == "mixed":
        implicit_converted = int(implicit.sum())
        if rating_range is None:
            explicit_vals = values[~implicit]
            lo = min(explicit_vals.min(), implicit_fill) if explicit_vals.size else implicit_fill
            hi = max(explicit_vals.max(), implicit_fill) if explicit_vals.size else implicit_fill
            rating_range = (float(lo), float(hi))
        values = implicit_to_explicit(values, implicit, implicit_fill, rating_range)

    table = RatingTable.from_records(zip(users, items, values), rating_range)
    catalog = _catalog_for_table(table, genre_map)
    report = LoadReport(dropped_items=len(dropped_item_ids),
                        dropped_ratings=dropped_ratings,
                        implicit_converted=implicit_converted)
    return LoadedDataset(table, catalog, report)


def _catalog_for_table(table, genre_map):
    """Align the raw genre map with the table's internal item indices."""
    names = sorted({g for i in table.item_ids.tolist() for g in genre_map[i]})
    gid = {name: k for k, name in enumerate(names)}
    item_genres = tuple(
        np.array(sorted(gid[g] for g in genre_map[ext]), dtype=np.int64)
        for ext in table.item_ids.tolist()
    )
    return GenreCatalog(item_genres=item_genres, genre_names=tuple(names))


def write_dataset(table, catalog, ratings_path, genres_path, delimiter=","):
    """Write a loaded dataset back to the canonical file shapes.

    Ratings round-trip exactly: values are emitted with ``repr`` so a reload
    reproduces the same table bit for bit.
    """
    with open(ratings_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["user", "item", "rating"])
        for u, i, v in zip(table.users, table.items, table.values):
            writer.writerow([int(table.user_ids[u]), int(table.item_ids[i]), repr(float(v))])
    with open(genres_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["item", "genres"])
        for idx in range(table.n_items):
            labels = "|".join(catalog.genre_names[g] for g in catalog.item_genres[idx])
            writer.writerow([int(table.item_ids[idx]), labels])


def compute_popularity(table: RatingTable, top_fraction=0.2) -> PopularityIndex:
    """Item popularity as the fraction of users who rated the item.

    The popular set holds the ceil(top_fraction * n_items) items with the
    highest popularity, ties broken by ascending item index.
    """
    return PopularityIndex.from_interactions(
        table.users, table.items, table.n_users, table.n_items, top_fraction)


def split_user_groups(table, index, group_count=3, basis="items") -> GroupAssignment:
    """Partition users into equally sized groups by popularity inclination.

    A user's popularity fraction is the share of popular items in their
    profile. ``basis="items"`` counts each distinct rated item once;
    ``basis="ratings"`` weights items by their rating value. Users are
    sorted ascending by (fraction, user index) and split into
    ``group_count`` contiguous chunks whose sizes differ by at most one.
    """
    if table.n_users < group_count:
        raise DatasetError(
            f"cannot split {table.n_users} users into {group_count} groups")
    if basis not in ("items", "ratings"):
        raise ConfigError(f"unknown popularity basis {basis!r}")
    popular = index.popular_mask[table.items]
    if basis == "items":
        num = np.bincount(table.users, weights=popular.astype(float),
                          minlength=table.n_users)
        den = np.bincount(table.users, minlength=table.n_users).astype(float)
    else:
        num = np.bincount(table.users, weights=table.values * popular,
                          minlength=table.n_users)
        den = np.bincount(table.users, weights=table.values, minlength=table.n_users)
    fraction = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    order = np.lexsort((np.arange(table.n_users), fraction))
    group = np.empty(table.n_users, dtype=np.int8)
    for g, chunk in enumerate(np.array_split(order, group_count)):
        group[chunk] = g
    return GroupAssignment(group=group, fraction=fraction,
                           labels=group_labels(group_count))


def dataset_stats(table: RatingTable, catalog: GenreCatalog) -> dict:
    """Summary statistics of a loaded dataset as a flat JSON-shaped record."""
    n_u, n_i, n_r = table.n_users, table.n_items, table.n_ratings
    return {
        "n_users": n_u,
        "n_items": n_i,
        "n_ratings": n_r,
        "n_genres": catalog.n_genres,
        "ratings_per_user": n_r / n_u,
        "ratings_per_item": n_r / n_i,
        "sparsity": 1.0 - n_r / (n_u * n_i),
        "rating_min": table.rating_min,
        "rating_max": table.rating_max,
    }
