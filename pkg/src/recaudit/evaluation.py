"""Cross-validated audit harness.

Ratings are partitioned uniformly at random into folds; each fold serves
once as the 20% test split while the remainder trains the engines. Per
fold and algorithm the harness produces per-user metric vectors (NaN marks
users for whom a metric is undefined, e.g. no test ratings in that fold),
which :func:`aggregate` folds into group-level tables with fold-consistent
Welch significance flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .corpus import GenreCatalog, GroupAssignment, PopularityIndex, RatingTable
from .engines import HyperParams, TrainData, TrainedModel, fit
from .errors import DatasetError
from .metrics import welch_t_test

SIGNIFICANCE_LEVEL = 0.05

#: metrics averaged per user then per fold
USER_METRICS = ("mae", "precision", "recall", "mc", "pl")

_RANK_BLOCK = 2048


@dataclass(eq=False)
class FoldPlan:
    """Assignment of every rating (in canonical table order) to a fold."""

    fold_of: np.ndarray
    n_folds: int
    seed: int

    def __post_init__(self):
        self.fold_of.flags.writeable = False
        sizes = np.bincount(self.fold_of, minlength=self.n_folds)
        if sizes.max() - sizes.min() > 1:
            raise DatasetError("fold sizes differ by more than one")

    def train_mask(self, fold: int) -> np.ndarray:
        return self.fold_of != fold

    def test_mask(self, fold: int) -> np.ndarray:
        return self.fold_of == fold


def make_folds(table: RatingTable, seed: int, n_folds: int = 5) -> FoldPlan:
    """Uniform random partition of the ratings into ``n_folds`` folds.

    Fold sizes differ by at most one; the same seed reproduces the same
    plan exactly.
    """
    if table.n_ratings < n_folds:
        raise DatasetError(
            f"{table.n_ratings} ratings cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n_ratings)
    fold_of = np.empty(table.n_ratings, dtype=np.int8)
    for f, chunk in enumerate(np.array_split(perm, n_folds)):
        fold_of[chunk] = f
    return FoldPlan(fold_of=fold_of, n_folds=n_folds, seed=seed)


@dataclass
class RecommendationList:
    """Top-n items for one user, ordered by descending predicted score with
    ties broken by higher full-dataset popularity, then lower item index.
    Never contains items from the user's training profile."""

    user: int
    items: np.ndarray
    scores: np.ndarray
    truncated: bool = False


def top_n(model: TrainedModel, user: int, train_profile, catalog: GenreCatalog,
          popularity: PopularityIndex, n: int = 10) -> RecommendationList:
    """Rank the catalog outside the user's training profile for one user."""
    held = np.zeros(catalog.n_items, dtype=bool)
    profile = np.asarray(list(train_profile), dtype=np.int64)
    if profile.size:
        held[profile] = True
    candidates = np.nonzero(~held)[0]
    scores = np.array([model.predict(user, int(i)) for i in candidates])
    order = np.lexsort((candidates, -popularity.popularity[candidates], -scores))
    keep = order[:n]
    return RecommendationList(
        user=user,
        items=candidates[keep],
        scores=scores[keep],
        truncated=candidates.size < n,
    )


@dataclass(eq=False)
class FoldUserMetrics:
    """Per-user metric vectors of one (algorithm, fold) evaluation.

    NaN marks undefined entries; ``profile_genres[u, c]`` says whether genre
    c occurs in u's training-fold profile (the input to MC attribution).
    """

    algorithm: str
    fold: int
    mae: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    mc: np.ndarray
    gap_p: np.ndarray
    gap_q: np.ndarray
    pl: np.ndarray
    profile_genres: np.ndarray
    rec_items: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class EvalSettings:
    top_n: int = 10
    alpha: float = 0.01
    mc_weighting: str = "uniform"        # uniform | rating
    per_fold_popularity: bool = False


def _rank_and_predict(model, train, popularity, n, test_users, test_items):
    """Blockwise scoring pass producing top-n lists and test predictions.

    Scores arrive in item blocks; training pairs are masked out before
    ranking so recommendation lists never intersect the training profile.
    Test-pair predictions are gathered from the same scored blocks, which
    keeps them identical to ``model.predict`` on those pairs.
    """
    n_users, n_items = model.n_users, model.n_items
    pop = popularity.popularity

    top_items = np.full((n_users, n), -1, dtype=np.int64)
    top_scores = np.full((n_users, n), -np.inf)
    top_pop = np.zeros((n_users, n))

    test_order = np.argsort(test_items, kind="stable")
    test_items_sorted = test_items[test_order]
    test_preds = np.empty(len(test_items))

    for lo in range(0, n_items, _RANK_BLOCK):
        hi = min(lo + _RANK_BLOCK, n_items)
        block = np.arange(lo, hi)
        scores = model.score_block(block)

        # test predictions before the train mask turns scores into -inf
        t0, t1 = np.searchsorted(test_items_sorted, (lo, hi))
        sel = test_order[t0:t1]
        test_preds[sel] = scores[test_users[sel], test_items[sel] - lo]

        for item in range(lo, hi):
            raters, _ = train.item_raters(item)
            if raters.size:
                scores[raters, item - lo] = -np.inf

        cand_scores = np.hstack([top_scores, scores])
        cand_pop = np.hstack([top_pop, np.broadcast_to(pop[block], (n_users, hi - lo))])
        cand_items = np.hstack([top_items, np.broadcast_to(block, (n_users, hi - lo))])
        for u in range(n_users):
            order = np.lexsort((cand_items[u], -cand_pop[u], -cand_scores[u]))[:n]
            top_scores[u] = cand_scores[u, order]
            top_pop[u] = cand_pop[u, order]
            top_items[u] = cand_items[u, order]

    top_items[np.isinf(top_scores)] = -1
    return top_items, test_preds


def evaluate_fold(table: RatingTable, catalog: GenreCatalog,
                  popularity: PopularityIndex, plan: FoldPlan, fold: int,
                  algorithm: str, hp: HyperParams,
                  settings: EvalSettings) -> FoldUserMetrics:
    """Fit one engine on a fold's training split and score every metric."""
    train_mask = plan.train_mask(fold)
    train = TrainData.from_table(table, train_mask)
    model = fit(algorithm, train, hp)

    test_mask = ~train_mask
    test_users = table.users[test_mask].astype(np.int64)
    test_items = table.items[test_mask].astype(np.int64)
    test_ratings = table.values[test_mask]

    gap_popularity = popularity
    if settings.per_fold_popularity:
        gap_popularity = PopularityIndex.from_interactions(
            train.uu, train.ii, table.n_users, table.n_items)

    rec_items, test_preds = _rank_and_predict(
        model, train, popularity, settings.top_n, test_users, test_items)

    n_users = table.n_users
    nan = np.full(n_users, np.nan)

    # accuracy
    abs_err = np.abs(test_ratings - test_preds)
    test_count = np.bincount(test_users, minlength=n_users)
    mae = np.divide(np.bincount(test_users, abs_err, n_users), test_count,
                    out=nan.copy(), where=test_count > 0)

    # precision / recall at the train-mean relevance threshold
    threshold = train.mu
    relevant_mask = test_ratings > threshold
    precision = nan.copy()
    recall = nan.copy()
    rel_users = test_users[relevant_mask]
    rel_items = test_items[relevant_mask]
    rel_count = np.bincount(rel_users, minlength=n_users)
    rel_sorted = rel_items[np.argsort(rel_users, kind="stable")]
    rel_ptr = np.concatenate([[0], np.cumsum(rel_count)])
    for u in np.nonzero(rel_count > 0)[0]:
        relevant = set(rel_sorted[rel_ptr[u]:rel_ptr[u + 1]].tolist())
        hits = sum(1 for i in rec_items[u] if i >= 0 and i in relevant)
        precision[u] = hits / settings.top_n
        recall[u] = hits / rel_count[u]

    # genre distributions of profiles (p) and recommendations (q)
    share = catalog.share_matrix()
    profile_b = sp.csr_matrix((np.ones_like(train.rr), train.ii, train.u_ptr),
                              shape=(n_users, table.n_items))
    presence = profile_b @ share
    profile_genres = presence > 0
    if settings.mc_weighting == "rating":
        profile_w = sp.csr_matrix((train.rr, train.ii, train.u_ptr),
                                  shape=(n_users, table.n_items))
        p_mat = profile_w @ share
    else:
        p_mat = presence
    p_tot = p_mat.sum(axis=1)

    rec_valid = rec_items >= 0
    q_mat = (share[np.where(rec_valid, rec_items, 0)]
             * rec_valid[:, :, None]).sum(axis=1)
    q_tot = q_mat.sum(axis=1)

    mc = nan.copy()
    defined = (p_tot > 0) & (q_tot > 0)
    if defined.any():
        p = p_mat[defined] / p_tot[defined, None]
        q = q_mat[defined] / q_tot[defined, None]
        q_smooth = q + settings.alpha * (p - q)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(np.where(p > 0, p / q_smooth, 1.0)), 0.0)
        mc[defined] = np.maximum(terms.sum(axis=1), 0.0)

    # group average popularity ingredients
    pop = gap_popularity.popularity
    profile_count = train.user_count
    profile_pop = profile_b @ pop
    gap_p = np.divide(profile_pop, profile_count, out=nan.copy(),
                      where=profile_count > 0)
    rec_pop = (pop[np.where(rec_valid, rec_items, 0)] * rec_valid).sum(axis=1)
    rec_len = rec_valid.sum(axis=1)
    gap_q = np.divide(rec_pop, rec_len, out=nan.copy(), where=rec_len > 0)

    with np.errstate(invalid="ignore", divide="ignore"):
        pl = np.where(np.isnan(gap_p) | np.isnan(gap_q) | (gap_p == 0),
                      np.nan, gap_q / np.where(gap_p == 0, 1.0, gap_p) - 1.0)

    return FoldUserMetrics(
        algorithm=algorithm, fold=fold, mae=mae, precision=precision,
        recall=recall, mc=mc, gap_p=gap_p, gap_q=gap_q, pl=pl,
        profile_genres=np.asarray(profile_genres), rec_items=rec_items)


@dataclass
class MetricCell:
    algorithm: str
    group: str
    fold: int
    metric: str
    value: Optional[float]
    n_users: int


@dataclass(eq=False)
class GroupMetrics:
    """Group-level audit table.

    ``summary[alg][group][metric]`` averages the per-fold values (users
    first, then folds). ``pvalues[alg][metric][group]`` lists per-fold Welch
    p-values of group versus the least popularity-inclined group, and
    ``significant`` flags comparisons with p < 0.05 in every single fold.
    """

    algorithms: list
    group_labels: tuple
    n_folds: int
    cells: list
    summary: dict
    pvalues: dict
    significant: dict


def _nanmean(values: np.ndarray) -> Optional[float]:
    finite = values[~np.isnan(values)]
    return float(finite.mean()) if finite.size else None


def aggregate(results, groups: GroupAssignment, n_folds: int) -> GroupMetrics:
    """Fold per-user metrics into the group-level audit table.

    Group values average users within a fold, then folds. The PL cell uses
    the group-level definition (lift of the GAP means); the per-user lift
    samples feed the significance test. A comparison is flagged significant
    only when its p-value stays below 0.05 in all folds; degenerate samples
    (no variance, too few users) disable the flag.
    """
    labels = groups.labels
    algorithms = list(dict.fromkeys(r.algorithm for r in results))
    cells = []
    summary: dict = {}
    pvalues: dict = {}
    significant: dict = {}

    member_idx = [groups.members(g) for g in range(groups.n_groups)]

    for alg in algorithms:
        per_fold = {m: {g: [] for g in range(groups.n_groups)} for m in
                    ("mae", "precision", "recall", "mc", "pl", "gap_p", "gap_q")}
        fold_results = sorted((r for r in results if r.algorithm == alg),
                              key=lambda r: r.fold)
        pvalues[alg] = {m: {lab: [] for lab in labels[1:]} for m in USER_METRICS}

        for r in fold_results:
            samples = {"mae": r.mae, "precision": r.precision,
                       "recall": r.recall, "mc": r.mc, "pl": r.pl}
            for g, members in enumerate(member_idx):
                for m in ("mae", "precision", "recall", "mc"):
                    vals = samples[m][members]
                    mean = _nanmean(vals)
                    per_fold[m][g].append(mean)
                    cells.append(MetricCell(alg, labels[g], r.fold, m, mean,
                                            int(np.sum(~np.isnan(vals)))))
                # Eq.-style group lift from the GAP means over users with
                # both sides defined
                both = members[~np.isnan(r.gap_p[members]) & ~np.isnan(r.gap_q[members])]
                if both.size and r.gap_p[both].mean() != 0:
                    gp = float(r.gap_p[both].mean())
                    gq = float(r.gap_q[both].mean())
                    lift = gq / gp - 1.0
                else:
                    gp = gq = lift = None
                per_fold["gap_p"][g].append(gp)
                per_fold["gap_q"][g].append(gq)
                per_fold["pl"][g].append(lift)
                cells.append(MetricCell(alg, labels[g], r.fold, "gap_p", gp, int(both.size)))
                cells.append(MetricCell(alg, labels[g], r.fold, "gap_q", gq, int(both.size)))
                cells.append(MetricCell(alg, labels[g], r.fold, "pl", lift, int(both.size)))

            base_members = member_idx[0]
            for m in USER_METRICS:
                base = samples[m][base_members]
                base = base[~np.isnan(base)]
                for g in range(1, groups.n_groups):
                    other = samples[m][member_idx[g]]
                    other = other[~np.isnan(other)]
                    res = welch_t_test(base, other)
                    pvalues[alg][m][labels[g]].append(
                        None if res is None else res.p_value)

        summary[alg] = {}
        for g, lab in enumerate(labels):
            summary[alg][lab] = {}
            for m in ("mae", "precision", "recall", "mc", "pl", "gap_p", "gap_q"):
                vals = [v for v in per_fold[m][g] if v is not None]
                summary[alg][lab][m] = float(np.mean(vals)) if vals else None

        significant[alg] = {}
        for m in USER_METRICS:
            significant[alg][m] = {}
            for lab in labels[1:]:
                ps = pvalues[alg][m][lab]
                significant[alg][m][lab] = (
                    len(ps) == n_folds
                    and all(p is not None and p < SIGNIFICANCE_LEVEL for p in ps))

    return GroupMetrics(algorithms=algorithms, group_labels=tuple(labels),
                        n_folds=n_folds, cells=cells, summary=summary,
                        pvalues=pvalues, significant=significant)
