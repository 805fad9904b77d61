"""Non-negative matrix factorization via regularized multiplicative updates.

Factors are initialized uniformly at random in (0, 1) and stay non-negative
because every update multiplies by a ratio of non-negative accumulators;
this requires strictly positive training ratings. User factors are updated
first, estimates are recomputed, then item factors follow: updating both
sides from the same stale estimates provably oscillates on fully observed
low-rank data because of the factor scale ambiguity.

Prediction is the factor dot product, clipped; pairs involving an entity
unseen in training fall back to the training mean.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import EngineError
from .base import HyperParams, TrainData, TrainedModel


class NMF(TrainedModel):

    algorithm = "NMF"

    @classmethod
    def fit(cls, train: TrainData, hp: HyperParams) -> "NMF":
        if train.rr.min() <= 0:
            raise EngineError(
                "NMF requires strictly positive ratings; shift the rating "
                "range so its lower bound is above zero")
        n_u, n_i, f = train.n_users, train.n_items, hp.nmf_factors
        rng = np.random.default_rng(hp.seed)
        P = rng.uniform(0.0, 1.0, (n_u, f))
        Q = rng.uniform(0.0, 1.0, (n_i, f))

        uu, ii, rr = train.uu, train.ii, train.rr
        perm = train.item_order                  # user-major -> item-major
        # explicit indptr/indices keep .data aligned with the rating order,
        # so per-epoch estimates can be swapped in without re-sorting
        R_u = sp.csr_matrix((rr, ii, train.u_ptr), shape=(n_u, n_i))
        E_u = sp.csr_matrix((rr.copy(), ii, train.u_ptr), shape=(n_u, n_i))
        R_i = sp.csr_matrix((rr[perm], uu[perm], train.i_ptr), shape=(n_i, n_u))
        E_i = sp.csr_matrix((rr[perm].copy(), uu[perm], train.i_ptr), shape=(n_i, n_u))
        reg_u = train.user_count[:, None] * hp.nmf_reg
        reg_i = train.item_count[:, None] * hp.nmf_reg

        rmse_trace = []
        factor_min_trace = []
        for _ in range(hp.nmf_epochs):
            est = np.einsum("nf,nf->n", P[uu], Q[ii])
            E_u.data = est
            num = R_u @ Q
            den = E_u @ Q + reg_u * P
            P = np.where(den > 0, P * np.divide(num, den, out=np.ones_like(den),
                                                where=den > 0), P)
            est = np.einsum("nf,nf->n", P[uu], Q[ii])
            E_i.data = est[perm]
            num = R_i @ P
            den = E_i @ P + reg_i * Q
            Q = np.where(den > 0, Q * np.divide(num, den, out=np.ones_like(den),
                                                where=den > 0), Q)
            resid = rr - np.einsum("nf,nf->n", P[uu], Q[ii])
            rmse_trace.append(float(np.sqrt(np.mean(resid ** 2))))
            factor_min_trace.append(float(min(P.min(), Q.min())))

        model = cls(hp, n_u, n_i, (train.clip_lo, train.clip_hi), train.mu)
        model.P = P
        model.Q = Q
        model._known_u = train.user_count > 0
        model._known_i = train.item_count > 0
        model.diagnostics = {
            "rmse_per_epoch": rmse_trace,
            "factor_min_per_epoch": factor_min_trace,
        }
        return model

    def _estimate(self, user, item):
        known_u = 0 <= user < self.n_users and self._known_u[user]
        known_i = 0 <= item < self.n_items and self._known_i[item]
        if not (known_u and known_i):
            return self.mu, True
        return float(self.P[user] @ self.Q[item]), False

    def score_block(self, item_ids):
        raw = self.P @ self.Q[item_ids].T
        known = self._known_u[:, None] & self._known_i[item_ids][None, :]
        return self.clip(np.where(known, raw, self.mu))

    def params_dict(self):
        return {
            "user_factors": self.P.tolist(),
            "item_factors": self.Q.tolist(),
            "known_users": self._known_u.astype(int).tolist(),
            "known_items": self._known_i.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls._shell(d)
        p = d["params"]
        model.P = np.asarray(p["user_factors"], dtype=np.float64)
        model.Q = np.asarray(p["item_factors"], dtype=np.float64)
        model._known_u = np.asarray(p["known_users"], dtype=bool)
        model._known_i = np.asarray(p["known_items"], dtype=bool)
        return model
