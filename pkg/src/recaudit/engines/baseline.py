"""Global-mean baseline with user and item rating biases.

Predicts ``mu + b_u + b_i`` where the biases are estimated by alternating
regularized least squares: each pass solves the items given the current
user biases and vice versa. Entities absent from the training set keep a
zero bias, so held-out users and items degrade gracefully toward ``mu``.
"""

from __future__ import annotations

import numpy as np

from .base import HyperParams, TrainData, TrainedModel


class UserItemAvg(TrainedModel):

    algorithm = "UserItemAvg"

    @classmethod
    def fit(cls, train: TrainData, hp: HyperParams) -> "UserItemAvg":
        mu = train.mu
        bu = np.zeros(train.n_users)
        bi = np.zeros(train.n_items)
        uu, ii, rr = train.uu, train.ii, train.rr
        den_i = hp.bias_reg_item + train.item_count
        den_u = hp.bias_reg_user + train.user_count
        for _ in range(hp.bias_epochs):
            resid_i = np.bincount(ii, rr - mu - bu[uu], train.n_items)
            bi = np.divide(resid_i, den_i, out=np.zeros_like(bi), where=den_i > 0)
            resid_u = np.bincount(uu, rr - mu - bi[ii], train.n_users)
            bu = np.divide(resid_u, den_u, out=np.zeros_like(bu), where=den_u > 0)
        model = cls(hp, train.n_users, train.n_items,
                    (train.clip_lo, train.clip_hi), mu)
        model.bu = bu
        model.bi = bi
        model._known_u = train.user_count > 0
        model._known_i = train.item_count > 0
        return model

    def _estimate(self, user, item):
        known_u = 0 <= user < self.n_users and self._known_u[user]
        known_i = 0 <= item < self.n_items and self._known_i[item]
        est = self.mu
        if known_u:
            est += self.bu[user]
        if known_i:
            est += self.bi[item]
        return est, not (known_u and known_i)

    def score_block(self, item_ids):
        raw = self.mu + self.bu[:, None] + self.bi[item_ids][None, :]
        return self.clip(raw)

    def params_dict(self):
        return {
            "user_bias": self.bu.tolist(),
            "item_bias": self.bi.tolist(),
            "known_users": self._known_u.astype(int).tolist(),
            "known_items": self._known_i.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls._shell(d)
        p = d["params"]
        model.bu = np.asarray(p["user_bias"], dtype=np.float64)
        model.bi = np.asarray(p["item_bias"], dtype=np.float64)
        model._known_u = np.asarray(p["known_users"], dtype=bool)
        model._known_i = np.asarray(p["known_items"], dtype=bool)
        return model
