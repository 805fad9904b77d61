"""Co-clustering collaborative filtering.

Users and items are assigned to clusters by alternating minimization of the
squared reconstruction error of

    predict(u, i) = A_co[g(u), h(i)] + (mean_u - A_ucl[g(u)])
                                     + (mean_i - A_icl[h(i)])

where ``A_co`` holds co-cluster rating means and ``A_ucl`` / ``A_icl`` the
user-cluster and item-cluster means. Each epoch recomputes the averages,
reassigns every training user to its cost-minimizing cluster, then does the
same for items. A cluster left empty is re-seeded with the lowest-index
member of the largest cluster (logged as a diagnostic).

Unknown user and item fall back to the global mean; if only one side is
known its observed mean is used.
"""

from __future__ import annotations

import logging

import numpy as np

from .base import HyperParams, TrainData, TrainedModel

log = logging.getLogger(__name__)


def _cluster_means(train, g, h, ku, ki):
    uu, ii, rr = train.uu, train.ii, train.rr
    mu = train.mu
    co = g[uu] * ki + h[ii]
    cnt = np.bincount(co, minlength=ku * ki)
    aco = np.where(cnt > 0,
                   np.bincount(co, rr, ku * ki) / np.maximum(cnt, 1),
                   mu).reshape(ku, ki)
    gcnt = np.bincount(g[uu], minlength=ku)
    aucl = np.where(gcnt > 0,
                    np.bincount(g[uu], rr, ku) / np.maximum(gcnt, 1), mu)
    hcnt = np.bincount(h[ii], minlength=ki)
    aicl = np.where(hcnt > 0,
                    np.bincount(h[ii], rr, ki) / np.maximum(hcnt, 1), mu)
    return aco, aucl, aicl


def _fix_empty(assign, active, n_clusters, what):
    """Move members from the largest cluster into any empty one."""
    moved = 0
    while True:
        counts = np.bincount(assign[active], minlength=n_clusters)
        empty = np.nonzero(counts == 0)[0]
        if empty.size == 0 or counts.max() < 2:
            break
        largest = int(counts.argmax())
        donor = np.nonzero(active & (assign == largest))[0][0]
        assign[donor] = empty[0]
        moved += 1
        log.debug("re-seeded empty %s cluster %d with member %d", what, empty[0], donor)
    return moved


class CoClustering(TrainedModel):

    algorithm = "CoClustering"

    @classmethod
    def fit(cls, train: TrainData, hp: HyperParams) -> "CoClustering":
        ku, ki = hp.cc_user_clusters, hp.cc_item_clusters
        rng = np.random.default_rng(hp.seed)
        g = rng.integers(0, ku, train.n_users)
        h = rng.integers(0, ki, train.n_items)
        uu, ii, rr = train.uu, train.ii, train.rr
        umean, imean = train.user_mean, train.item_mean
        active_u = train.user_count > 0
        active_i = train.item_count > 0

        objective_trace = []
        reseeds = 0
        for _ in range(hp.cc_epochs):
            aco, aucl, aicl = _cluster_means(train, g, h, ku, ki)

            # users: cost_u(g') = sum_i (rt - C[g', h(i)])^2 with
            # rt = r - mean_u - (mean_i - A_icl[h(i)]), C = A_co - A_ucl
            rt = rr - umean[uu] - (imean[ii] - aicl[h[ii]])
            C = aco - aucl[:, None]
            m1 = np.bincount(uu * ki + h[ii], rt, train.n_users * ki).reshape(-1, ki)
            m0 = np.bincount(uu * ki + h[ii], minlength=train.n_users * ki) \
                   .reshape(-1, ki).astype(float)
            cost = -2.0 * m1 @ C.T + m0 @ (C ** 2).T
            g = np.where(active_u, cost.argmin(axis=1), g)
            reseeds += _fix_empty(g, active_u, ku, "user")

            # items, against the refreshed user assignment
            rt = rr - imean[ii] - (umean[uu] - aucl[g[uu]])
            C2 = aco - aicl[None, :]
            m1 = np.bincount(ii * ku + g[uu], rt, train.n_items * ku).reshape(-1, ku)
            m0 = np.bincount(ii * ku + g[uu], minlength=train.n_items * ku) \
                   .reshape(-1, ku).astype(float)
            cost = -2.0 * m1 @ C2 + m0 @ (C2 ** 2)
            h = np.where(active_i, cost.argmin(axis=1), h)
            reseeds += _fix_empty(h, active_i, ki, "item")

            aco, aucl, aicl = _cluster_means(train, g, h, ku, ki)
            pred = aco[g[uu], h[ii]] + (umean[uu] - aucl[g[uu]]) + (imean[ii] - aicl[h[ii]])
            objective_trace.append(float(np.sum((rr - pred) ** 2)))

        aco, aucl, aicl = _cluster_means(train, g, h, ku, ki)
        model = cls(hp, train.n_users, train.n_items,
                    (train.clip_lo, train.clip_hi), train.mu)
        model.user_cluster = g
        model.item_cluster = h
        model.co_mean = aco
        model.user_cluster_mean = aucl
        model.item_cluster_mean = aicl
        model.user_mean = umean
        model.item_mean = imean
        model._known_u = active_u
        model._known_i = active_i
        model.diagnostics = {
            "objective_per_epoch": objective_trace,
            "empty_cluster_reseeds": reseeds,
        }
        return model

    def _estimate(self, user, item):
        known_u = 0 <= user < self.n_users and self._known_u[user]
        known_i = 0 <= item < self.n_items and self._known_i[item]
        if known_u and known_i:
            gu, hi = self.user_cluster[user], self.item_cluster[item]
            est = (self.co_mean[gu, hi]
                   + (self.user_mean[user] - self.user_cluster_mean[gu])
                   + (self.item_mean[item] - self.item_cluster_mean[hi]))
            return float(est), False
        if known_u:
            return float(self.user_mean[user]), True
        if known_i:
            return float(self.item_mean[item]), True
        return self.mu, True

    def score_block(self, item_ids):
        gu = self.user_cluster
        hi = self.item_cluster[item_ids]
        full = (self.co_mean[np.ix_(gu, hi)]
                + (self.user_mean - self.user_cluster_mean[gu])[:, None]
                + (self.item_mean[item_ids] - self.item_cluster_mean[hi])[None, :])
        known_i = self._known_i[item_ids][None, :]
        known_u = self._known_u[:, None]
        out = np.where(known_u & known_i, full,
                       np.where(known_u, self.user_mean[:, None],
                                np.where(known_i, self.item_mean[item_ids][None, :], self.mu)))
        return self.clip(out)

    def params_dict(self):
        return {
            "user_cluster": self.user_cluster.tolist(),
            "item_cluster": self.item_cluster.tolist(),
            "co_cluster_mean": self.co_mean.tolist(),
            "user_cluster_mean": self.user_cluster_mean.tolist(),
            "item_cluster_mean": self.item_cluster_mean.tolist(),
            "user_mean": self.user_mean.tolist(),
            "item_mean": self.item_mean.tolist(),
            "known_users": self._known_u.astype(int).tolist(),
            "known_items": self._known_i.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls._shell(d)
        p = d["params"]
        model.user_cluster = np.asarray(p["user_cluster"], dtype=np.int64)
        model.item_cluster = np.asarray(p["item_cluster"], dtype=np.int64)
        model.co_mean = np.asarray(p["co_cluster_mean"], dtype=np.float64)
        model.user_cluster_mean = np.asarray(p["user_cluster_mean"], dtype=np.float64)
        model.item_cluster_mean = np.asarray(p["item_cluster_mean"], dtype=np.float64)
        model.user_mean = np.asarray(p["user_mean"], dtype=np.float64)
        model.item_mean = np.asarray(p["item_mean"], dtype=np.float64)
        model._known_u = np.asarray(p["known_users"], dtype=bool)
        model._known_i = np.asarray(p["known_items"], dtype=bool)
        return model
