"""Shared machinery for the rating predictors: hyperparameters, the
indexed training view, and the uniform fit/predict contract."""

from __future__ import annotations

import abc
from dataclasses import dataclass, asdict
from typing import ClassVar, NamedTuple

import numpy as np

from ..errors import ConfigError, EngineError

SIMILARITIES = ("msd", "cosine", "pearson")


@dataclass(frozen=True)
class HyperParams:
    """Settings for all five engines; defaults follow the untuned reference
    configuration (no hyperparameter search is performed)."""

    knn_k: int = 40
    knn_min_k: int = 1
    similarity: str = "msd"
    nmf_factors: int = 15
    nmf_epochs: int = 50
    nmf_reg: float = 0.06
    cc_user_clusters: int = 3
    cc_item_clusters: int = 3
    cc_epochs: int = 20
    bias_reg_user: float = 15.0
    bias_reg_item: float = 10.0
    bias_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        problems = []
        for name in ("knn_k", "knn_min_k", "nmf_factors", "nmf_epochs",
                     "cc_user_clusters", "cc_item_clusters", "cc_epochs",
                     "bias_epochs"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("nmf_reg", "bias_reg_user", "bias_reg_item"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.similarity not in SIMILARITIES:
            problems.append(f"similarity must be one of {SIMILARITIES}, got {self.similarity!r}")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        return asdict(self)


class TrainData:
    """Training ratings in both user-major and item-major layouts.

    The index space is fixed by the full dataset, so users or items that end
    up with zero training ratings stay addressable and hit the fallback
    path, exactly as held-out entities would.
    """

    def __init__(self, users, items, values, n_users, n_items, clip_range):
        if len(values) == 0:
            raise EngineError("training set is empty")
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.clip_lo, self.clip_hi = float(clip_range[0]), float(clip_range[1])

        order = np.lexsort((items, users))
        self.uu = np.asarray(users)[order].astype(np.int64)
        self.ii = np.asarray(items)[order].astype(np.int64)
        self.rr = np.asarray(values)[order].astype(np.float64)
        self.u_ptr = np.searchsorted(self.uu, np.arange(self.n_users + 1))

        self.item_order = np.lexsort((self.uu, self.ii))
        self.i_ptr = np.searchsorted(self.ii[self.item_order], np.arange(self.n_items + 1))

        self.mu = float(self.rr.mean())
        self.user_count = np.bincount(self.uu, minlength=self.n_users)
        self.item_count = np.bincount(self.ii, minlength=self.n_items)
        with np.errstate(invalid="ignore"):
            self.user_mean = np.where(
                self.user_count > 0,
                np.bincount(self.uu, self.rr, self.n_users) / np.maximum(self.user_count, 1),
                self.mu)
            self.item_mean = np.where(
                self.item_count > 0,
                np.bincount(self.ii, self.rr, self.n_items) / np.maximum(self.item_count, 1),
                self.mu)

    @classmethod
    def from_table(cls, table, mask=None):
        if mask is None:
            users, items, values = table.users, table.items, table.values
        else:
            users, items, values = table.users[mask], table.items[mask], table.values[mask]
        return cls(users, items, values, table.n_users, table.n_items, table.rating_range)

    def item_raters(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        """Users who rated ``item`` (ascending index) and their ratings."""
        sel = self.item_order[self.i_ptr[item]:self.i_ptr[item + 1]]
        return self.uu[sel], self.rr[sel]

    def user_profile(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.u_ptr[user], self.u_ptr[user + 1])
        return self.ii[sl], self.rr[sl]

    def knows_user(self, user) -> bool:
        return 0 <= user < self.n_users and self.user_count[user] > 0

    def knows_item(self, item) -> bool:
        return 0 <= item < self.n_items and self.item_count[item] > 0


class Prediction(NamedTuple):
    value: float
    fallback: bool


class TrainedModel(abc.ABC):
    """Uniform prediction contract over the five engines.

    ``predict`` always returns a value clipped to the rating range; the
    fallback hierarchy (full formula, then available mean terms, then the
    global training mean) guarantees totality.
    """

    algorithm: ClassVar[str]

    def __init__(self, hp: HyperParams, n_users, n_items, clip_range, mu):
        self.hp = hp
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.clip_lo, self.clip_hi = float(clip_range[0]), float(clip_range[1])
        self.mu = float(mu)
        self.diagnostics: dict = {}

    @classmethod
    def _shell(cls, d: dict) -> "TrainedModel":
        """Allocate an instance with the common fields restored from a dict."""
        self = object.__new__(cls)
        TrainedModel.__init__(self, HyperParams(**d["hyperparams"]), d["n_users"],
                              d["n_items"], d["clip_range"], d["mu"])
        return self

    def clip(self, value):
        return np.clip(value, self.clip_lo, self.clip_hi)

    def predict(self, user, item) -> float:
        return self.predict_detail(user, item).value

    def predict_detail(self, user, item) -> Prediction:
        raw, fallback = self._estimate(int(user), int(item))
        return Prediction(float(self.clip(raw)), fallback)

    @abc.abstractmethod
    def _estimate(self, user, item) -> tuple[float, bool]:
        """Raw (unclipped) estimate plus a fallback flag."""

    @abc.abstractmethod
    def score_block(self, item_ids: np.ndarray) -> np.ndarray:
        """Clipped scores for every user against ``item_ids``.

        Returns an (n_users, len(item_ids)) array equal elementwise to
        ``predict`` on the same pairs.
        """

    @abc.abstractmethod
    def params_dict(self) -> dict:
        """Learned parameters as JSON-ready plain structures."""

    @classmethod
    @abc.abstractmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        """Rebuild a model from ``to_dict`` output."""

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "hyperparams": self.hp.to_dict(),
            "n_users": self.n_users,
            "n_items": self.n_items,
            "clip_range": [self.clip_lo, self.clip_hi],
            "mu": self.mu,
            "params": self.params_dict(),
        }
