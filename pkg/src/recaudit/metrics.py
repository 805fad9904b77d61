"""Per-user and per-group evaluation metrics.

The audit quantifies recommendation inconsistency along three axes:

* accuracy, as the mean absolute error of predicted ratings,
* miscalibration, as the KL divergence between the genre distribution of a
  user's profile and that of their recommendation list,
* popularity lift, as the relative increase of the recommendations' average
  item popularity over the profiles' average popularity.

Precision/recall against a train-mean relevance threshold back the MAE
findings in a top-n setting, and a two-sided Welch t-test compares the
per-user samples of two groups.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .corpus import GenreCatalog, PopularityIndex


def mae_user(model, user: int, test_items: Sequence[int],
             test_ratings: Sequence[float]) -> float:
    """Mean absolute error of the model on one user's held-out ratings.

    MAE(u) = (1/|T_u|) * sum over (i, r) in T_u of |r - predict(u, i)|
    """
    if len(test_items) == 0:
        raise ValueError("mae_user needs at least one test rating")
    total = 0.0
    for item, rating in zip(test_items, test_ratings):
        total += abs(rating - model.predict(user, item))
    return total / len(test_items)


def precision_recall(rec_items: Sequence[int], relevant_items, n: int
                     ) -> Optional[tuple[float, float]]:
    """Precision and recall of a top-n list against the relevant test items.

    Relevance is decided by the caller (items rated above the training-fold
    mean). Returns None when the user has no relevant test items; such users
    are excluded from group averages instead of being zero-filled.
    """
    relevant = set(relevant_items)
    if not relevant:
        return None
    hits = sum(1 for i in rec_items if i in relevant)
    return hits / n, hits / len(relevant)


def genre_distribution(interactions: Sequence[tuple[int, float]],
                       catalog: GenreCatalog) -> Optional[np.ndarray]:
    """Genre probability masses of a weighted item set.

    Every interaction contributes its weight split equally over the item's
    genres; the masses are normalized to sum to one. Returns None when no
    interaction carries genre information (the user is then skipped for
    miscalibration).
    """
    masses = np.zeros(catalog.n_genres)
    for item, weight in interactions:
        genres = catalog.item_genres[item]
        masses[genres] += weight / len(genres)
    total = masses.sum()
    if total <= 0:
        return None
    return masses / total


def miscalibration(p: np.ndarray, q: np.ndarray, alpha: float = 0.01) -> float:
    """KL divergence of the profile genre distribution from the
    recommendation genre distribution.

    KL(p || q~) = sum over genres of p * ln(p / q~), with the recommendation
    side smoothed as q~ = (1 - alpha) * q + alpha * p so that genres absent
    from the recommendations stay finite. Zero-mass genres in p contribute
    nothing. The smoothing keeps the identity KL = 0 exactly when q = p.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    # q + alpha*(p - q) is algebraically (1-alpha)*q + alpha*p but returns
    # q exactly (not merely approximately) where q equals p
    q_smooth = q + alpha * (p - q)
    mask = p > 0
    kl = float(np.sum(p[mask] * np.log(p[mask] / q_smooth[mask])))
    return kl if kl > 0 else 0.0


def average_popularity(item_lists, popularity: PopularityIndex) -> float:
    """Mean over users of the mean popularity of their items."""
    per_user = [float(np.mean(popularity.popularity[np.asarray(items)]))
                for items in item_lists if len(items)]
    if not per_user:
        raise ValueError("no non-empty item lists")
    return float(np.mean(per_user))


def popularity_lift(group_users, profiles, rec_lists,
                    popularity: PopularityIndex) -> Optional[float]:
    """Popularity lift of a user group.

    PL(g) = (GAP_q(g) - GAP_p(g)) / GAP_p(g), where GAP_p is the mean over
    the group's users of the mean popularity of their profile items and
    GAP_q the same over their recommended items. Positive values mean the
    recommendations are more popular than the profiles. Returns None when
    GAP_p is zero (lift undefined).
    """
    users = [u for u in group_users if len(profiles.get(u, ())) and len(rec_lists.get(u, ()))]
    if not users:
        return None
    gap_p = average_popularity((profiles[u] for u in users), popularity)
    gap_q = average_popularity((rec_lists[u] for u in users), popularity)
    if gap_p == 0:
        return None
    # ratio form of the lift: exact at identical sides (x/x - 1 == 0)
    return gap_q / gap_p - 1.0


class TTestResult(NamedTuple):
    t: float
    p_value: float


def welch_t_test(sample_a, sample_b) -> Optional[TTestResult]:
    """Two-sided Welch (unequal variance) t-test.

    Returns None when either sample has fewer than two values or both have
    zero variance, in which case no test is possible and callers must treat
    the comparison as not significant.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        return None
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    sq = var_a / a.size + var_b / b.size
    if sq == 0:
        return None
    t = (a.mean() - b.mean()) / math.sqrt(sq)
    df = sq ** 2 / ((var_a / a.size) ** 2 / (a.size - 1)
                    + (var_b / b.size) ** 2 / (b.size - 1))
    p = 2.0 * float(stats.t.sf(abs(t), df))
    return TTestResult(float(t), p)
