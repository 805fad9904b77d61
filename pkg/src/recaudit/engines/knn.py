"""User-based nearest-neighbour predictors.

``UserKNN`` predicts the similarity-weighted average of the neighbours'
ratings for the target item; ``UserKNNAvg`` predicts the target user's mean
plus the weighted average of the neighbours' mean-centered ratings.

Neighbours are the users who rated the target item, ranked by similarity
(ties broken by ascending user index), truncated to the top ``knn_k``.
Only strictly positive similarities contribute; if fewer than ``knn_min_k``
remain the prediction falls back (global mean for UserKNN, user mean for
UserKNNAvg when the user is known). Similarities are computed over co-rated
items only, and users without co-rated items have similarity zero.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import HyperParams, TrainData, TrainedModel

# users are processed in row chunks to bound the dense slice size
_USER_CHUNK = 1024


def similarity_matrix(train: TrainData, kind: str) -> np.ndarray:
    """Dense user-user similarity over co-rated items.

    * ``msd``:     1 / (1 + mean squared difference)
    * ``cosine``:  cosine of the co-rated rating vectors
    * ``pearson``: Pearson correlation with per-pair means
    """
    n = train.n_users
    shape = (n, train.n_items)
    coords = (train.uu, train.ii)
    R = sp.csr_matrix((train.rr, coords), shape=shape)
    B = sp.csr_matrix((np.ones_like(train.rr), coords), shape=shape)
    R2 = sp.csr_matrix((train.rr ** 2, coords), shape=shape)

    common = (B @ B.T).toarray()
    prod = (R @ R.T).toarray()
    sq = (R2 @ B.T).toarray()

    with np.errstate(invalid="ignore", divide="ignore"):
        if kind == "msd":
            msd = np.maximum(sq + sq.T - 2.0 * prod, 0.0) / common
            sim = 1.0 / (1.0 + msd)
        elif kind == "cosine":
            denom = np.sqrt(sq * sq.T)
            sim = np.where(denom > 0, prod / np.where(denom > 0, denom, 1.0), 0.0)
        elif kind == "pearson":
            s = (R @ B.T).toarray()
            num = common * prod - s * s.T
            var_u = common * sq - s ** 2
            var_v = common * sq.T - s.T ** 2
            denom = np.sqrt(np.maximum(var_u, 0.0) * np.maximum(var_v, 0.0))
            sim = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        else:  # pragma: no cover - validated upstream
            raise ValueError(f"unknown similarity {kind!r}")
    sim[common == 0] = 0.0
    return sim


def _topk_mask(sims: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k selection mask matching the scalar tie rule.

    Entries strictly above the k-th largest value are kept; entries equal to
    it fill the remaining slots left to right, which corresponds to
    ascending rater index because columns arrive in that order.
    """
    n = sims.shape[1]
    if n <= k:
        return np.ones(sims.shape, dtype=bool)
    kth = np.partition(sims, n - k, axis=1)[:, n - k]
    greater = sims > kth[:, None]
    equal = sims == kth[:, None]
    slots = k - greater.sum(axis=1)
    fill = np.cumsum(equal, axis=1) <= slots[:, None]
    return greater | (equal & fill)


class _UserKnnBase(TrainedModel):

    centered: bool = False

    @classmethod
    def fit(cls, train: TrainData, hp: HyperParams):
        model = cls(hp, train.n_users, train.n_items,
                    (train.clip_lo, train.clip_hi), train.mu)
        model._train = train
        model.user_mean = train.user_mean
        model._known_u = train.user_count > 0
        model.sim = similarity_matrix(train, hp.similarity)
        return model

    def _aggregate_rows(self, sims, ratings, raters):
        """Weighted-average estimates for row-wise similarity slices.

        Shared by the scalar and batch paths: both select and reduce the
        same weight vectors, so they agree to reduction rounding (each path
        is individually deterministic across runs).
        """
        w = np.where(_topk_mask(sims, self.hp.knn_k) & (sims > 0), sims, 0.0)
        target = ratings - self.user_mean[raters] if self.centered else ratings
        wsum = w.sum(axis=1)
        ok = (w > 0).sum(axis=1) >= self.hp.knn_min_k
        num = (w * target[None, :]).sum(axis=1)
        est = np.divide(num, wsum, out=np.zeros_like(wsum), where=wsum > 0)
        return est, ok

    # -- scalar path ------------------------------------------------------

    def _estimate(self, user, item):
        known_u = 0 <= user < self.n_users and self._known_u[user]
        if not (0 <= item < self.n_items) or not known_u:
            return self._fallback(user, known_u)
        raters, ratings = self._train.item_raters(item)
        if raters.size == 0:
            return self._fallback(user, known_u)
        est, ok = self._aggregate_rows(self.sim[user:user + 1, raters], ratings, raters)
        if not ok[0]:
            return self._fallback(user, known_u)
        if self.centered:
            return float(self.user_mean[user] + est[0]), False
        return float(est[0]), False

    def _fallback(self, user, known_u):
        if self.centered and known_u:
            return float(self.user_mean[user]), True
        return self.mu, True

    # -- batch path -------------------------------------------------------

    def score_block(self, item_ids):
        n_u = self.n_users
        out = np.empty((n_u, len(item_ids)))
        if self.centered:
            base = np.where(self._known_u, self.user_mean, self.mu)
        else:
            base = np.full(n_u, self.mu)
        out[:] = base[:, None]
        for col, item in enumerate(item_ids):
            raters, ratings = self._train.item_raters(int(item))
            if raters.size == 0:
                continue
            for lo in range(0, n_u, _USER_CHUNK):
                hi = min(lo + _USER_CHUNK, n_u)
                est, ok = self._aggregate_rows(self.sim[lo:hi, raters], ratings, raters)
                if self.centered:
                    est += self.user_mean[lo:hi]
                ok &= self._known_u[lo:hi]
                out[lo:hi, col] = np.where(ok, est, base[lo:hi])
        return self.clip(out)

    # -- serialization -----------------------------------------------------

    def params_dict(self):
        # memory-based model: the training ratings are the parameters; the
        # similarity matrix is derived state and is rebuilt on load
        t = self._train
        return {
            "users": t.uu.tolist(),
            "items": t.ii.tolist(),
            "ratings": t.rr.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls._shell(d)
        p = d["params"]
        train = TrainData(np.asarray(p["users"]), np.asarray(p["items"]),
                          np.asarray(p["ratings"]), d["n_users"], d["n_items"],
                          d["clip_range"])
        model._train = train
        model.user_mean = train.user_mean
        model._known_u = train.user_count > 0
        model.sim = similarity_matrix(train, model.hp.similarity)
        return model


class UserKNN(_UserKnnBase):
    algorithm = "UserKNN"
    centered = False


class UserKNNAvg(_UserKnnBase):
    algorithm = "UserKNNAvg"
    centered = True
