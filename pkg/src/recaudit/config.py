"""Audit configuration: JSON document, validation, resolved echo.

``validate_config`` resolves every default, rejects unknown keys, and
reports all violations at once. The resolved echo embedded in the report is
itself a valid config document, so re-feeding it reproduces the run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import SCHEMAS
from .engines import ALGORITHMS, SIMILARITIES, HyperParams
from .errors import ConfigError

POPULARITY_BASES = ("items", "ratings")
MC_WEIGHTINGS = ("uniform", "rating")

_HP_KEYS = ("knn_k", "knn_min_k", "nmf_factors", "nmf_epochs", "nmf_reg",
            "cc_user_clusters", "cc_item_clusters", "cc_epochs",
            "bias_reg_user", "bias_reg_item", "bias_epochs")

_DATASET_KEYS = ("ratings", "genres", "schema", "delimiter", "rating_range",
                 "implicit_fill", "name")
_SWITCH_KEYS = ("popularity_basis", "mc_weighting", "per_fold_popularity",
                "similarity")
_TOP_KEYS = ("dataset", "groups", "folds", "top_n", "alpha", "seed",
             "output_dir", "workers", "algorithms", "hyperparams",
             "switches", "max_display_genres")


@dataclass(frozen=True)
class DatasetConfig:
    ratings: Path
    genres: Path
    schema: str = "explicit"
    delimiter: str = ","
    rating_range: tuple | None = None
    implicit_fill: float = 5.0
    name: str = ""


@dataclass(frozen=True)
class Switches:
    popularity_basis: str = "items"
    mc_weighting: str = "uniform"
    per_fold_popularity: bool = False
    similarity: str = "msd"


@dataclass(frozen=True)
class AuditConfig:
    dataset: DatasetConfig
    groups: int = 3
    folds: int = 5
    top_n: int = 10
    alpha: float = 0.01
    seed: int = 42
    output_dir: Path | None = None
    workers: int = 1
    algorithms: tuple = ALGORITHMS
    hyperparams: HyperParams = HyperParams()
    switches: Switches = Switches()
    max_display_genres: int | None = None

    def resolved_dict(self) -> dict:
        """Fully materialized config document, reusable as a config file."""
        return {
            "dataset": {
                "ratings": str(self.dataset.ratings),
                "genres": str(self.dataset.genres),
                "schema": self.dataset.schema,
                "delimiter": self.dataset.delimiter,
                "rating_range": (list(self.dataset.rating_range)
                                 if self.dataset.rating_range else None),
                "implicit_fill": self.dataset.implicit_fill,
                "name": self.dataset.name,
            },
            "groups": self.groups,
            "folds": self.folds,
            "top_n": self.top_n,
            "alpha": self.alpha,
            "seed": self.seed,
            "output_dir": str(self.output_dir) if self.output_dir else None,
            "workers": self.workers,
            "algorithms": list(self.algorithms),
            "hyperparams": {k: getattr(self.hyperparams, k) for k in _HP_KEYS},
            "switches": {
                "popularity_basis": self.switches.popularity_basis,
                "mc_weighting": self.switches.mc_weighting,
                "per_fold_popularity": self.switches.per_fold_popularity,
                "similarity": self.switches.similarity,
            },
            "max_display_genres": self.max_display_genres,
        }

    def config_hash(self) -> str:
        """Hash of everything that influences the results (execution-only
        keys like output_dir and workers are excluded)."""
        doc = self.resolved_dict()
        doc.pop("output_dir")
        doc.pop("workers")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _check_unknown(doc: dict, allowed, prefix: str, problems: list):
    for key in doc:
        if key not in allowed:
            problems.append(f"unknown key '{prefix}{key}'")


def _as_int(doc, key, default, problems, minimum=None, prefix=""):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        problems.append(f"'{prefix}{key}' must be an integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        problems.append(f"'{prefix}{key}' must be >= {minimum}, got {value}")
        return default
    return value


def validate_config(source) -> AuditConfig:
    """Parse and validate a config file (path, JSON string, or dict).

    Raises :class:`ConfigError` listing every violation found; on success
    returns the resolved :class:`AuditConfig`.
    """
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("{"):
        path = Path(source)
        if not path.exists():
            raise ConfigError([f"config file {path} does not exist"])
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {path} is not valid JSON: {exc}"]) from None
        base_dir = path.parent
    elif isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from None
        base_dir = Path.cwd()
    else:
        doc = dict(source)
        base_dir = Path.cwd()

    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a JSON object"])
    _check_unknown(doc, _TOP_KEYS, "", problems)

    ds_doc = doc.get("dataset")
    dataset = None
    if not isinstance(ds_doc, dict):
        problems.append("missing required object 'dataset'")
    else:
        _check_unknown(ds_doc, _DATASET_KEYS, "dataset.", problems)
        ratings = ds_doc.get("ratings")
        genres = ds_doc.get("genres")
        if not ratings:
            problems.append("missing required key 'dataset.ratings'")
        if not genres:
            problems.append("missing required key 'dataset.genres'")
        schema = ds_doc.get("schema", "explicit")
        if schema not in SCHEMAS:
            problems.append(f"'dataset.schema' must be one of {SCHEMAS}, got {schema!r}")
        delimiter = ds_doc.get("delimiter", ",")
        if not isinstance(delimiter, str) or len(delimiter) != 1:
            problems.append(f"'dataset.delimiter' must be a single character, got {delimiter!r}")
        rating_range = ds_doc.get("rating_range")
        if rating_range is not None:
            ok = (isinstance(rating_range, (list, tuple)) and len(rating_range) == 2
                  and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                          for x in rating_range))
            if not ok:
                problems.append(f"'dataset.rating_range' must be [lo, hi], got {rating_range!r}")
            elif not rating_range[0] < rating_range[1]:
                problems.append(f"'dataset.rating_range' needs lo < hi, got {rating_range!r}")
            else:
                rating_range = (float(rating_range[0]), float(rating_range[1]))
        implicit_fill = ds_doc.get("implicit_fill", 5.0)
        if isinstance(implicit_fill, bool) or not isinstance(implicit_fill, (int, float)):
            problems.append(f"'dataset.implicit_fill' must be a number, got {implicit_fill!r}")
        elif (schema == "mixed" and isinstance(rating_range, tuple)
              and not rating_range[0] <= implicit_fill <= rating_range[1]):
            problems.append(
                f"'dataset.implicit_fill' {implicit_fill} outside rating_range {list(rating_range)}")
        if ratings and genres:
            ratings_path = (base_dir / ratings).resolve()
            genres_path = (base_dir / genres).resolve()
            if not ratings_path.exists():
                problems.append(f"'dataset.ratings' path {ratings_path} does not exist")
            if not genres_path.exists():
                problems.append(f"'dataset.genres' path {genres_path} does not exist")
            name = ds_doc.get("name") or ratings_path.stem
            dataset = DatasetConfig(
                ratings=ratings_path, genres=genres_path, schema=schema,
                delimiter=delimiter,
                rating_range=rating_range if isinstance(rating_range, tuple) else None,
                implicit_fill=float(implicit_fill) if isinstance(implicit_fill, (int, float)) else 5.0,
                name=str(name))

    groups = _as_int(doc, "groups", 3, problems, minimum=2)
    folds = _as_int(doc, "folds", 5, problems, minimum=2)
    top_n = _as_int(doc, "top_n", 10, problems, minimum=1)
    seed = _as_int(doc, "seed", 42, problems)
    workers = _as_int(doc, "workers", 1, problems, minimum=1)

    alpha = doc.get("alpha", 0.01)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        problems.append(f"'alpha' must be a number, got {alpha!r}")
    elif not 0 <= alpha < 1:
        problems.append(f"'alpha' must lie in [0, 1), got {alpha}")

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        problems.append(f"'output_dir' must be a string, got {output_dir!r}")

    algorithms = doc.get("algorithms", list(ALGORITHMS))
    if (not isinstance(algorithms, list) or not algorithms
            or len(set(algorithms)) != len(algorithms)
            or any(a not in ALGORITHMS for a in algorithms)):
        problems.append(
            f"'algorithms' must be a non-empty list without duplicates drawn from {ALGORITHMS}")
        algorithms = list(ALGORITHMS)

    sw_doc = doc.get("switches", {})
    switches = Switches()
    if not isinstance(sw_doc, dict):
        problems.append("'switches' must be an object")
    else:
        _check_unknown(sw_doc, _SWITCH_KEYS, "switches.", problems)
        basis = sw_doc.get("popularity_basis", "items")
        weighting = sw_doc.get("mc_weighting", "uniform")
        per_fold = sw_doc.get("per_fold_popularity", False)
        similarity = sw_doc.get("similarity", "msd")
        if basis not in POPULARITY_BASES:
            problems.append(f"'switches.popularity_basis' must be one of {POPULARITY_BASES}")
        if weighting not in MC_WEIGHTINGS:
            problems.append(f"'switches.mc_weighting' must be one of {MC_WEIGHTINGS}")
        if not isinstance(per_fold, bool):
            problems.append("'switches.per_fold_popularity' must be a boolean")
        if similarity not in SIMILARITIES:
            problems.append(f"'switches.similarity' must be one of {SIMILARITIES}")
        switches = Switches(
            popularity_basis=basis if basis in POPULARITY_BASES else "items",
            mc_weighting=weighting if weighting in MC_WEIGHTINGS else "uniform",
            per_fold_popularity=per_fold if isinstance(per_fold, bool) else False,
            similarity=similarity if similarity in SIMILARITIES else "msd")

    hp_doc = doc.get("hyperparams", {})
    hyperparams = HyperParams(similarity=switches.similarity)
    if not isinstance(hp_doc, dict):
        problems.append("'hyperparams' must be an object")
    else:
        _check_unknown(hp_doc, _HP_KEYS, "hyperparams.", problems)
        known = {k: v for k, v in hp_doc.items() if k in _HP_KEYS}
        try:
            hyperparams = HyperParams(similarity=switches.similarity, **known)
        except ConfigError as exc:
            problems.extend(f"hyperparams: {v}" for v in exc.violations)
        except TypeError as exc:
            problems.append(f"hyperparams: {exc}")

    max_display = doc.get("max_display_genres")
    if max_display is not None:
        if isinstance(max_display, bool) or not isinstance(max_display, int) or max_display < 1:
            problems.append(f"'max_display_genres' must be a positive integer or null, got {max_display!r}")

    if problems:
        raise ConfigError(problems)

    return AuditConfig(
        dataset=dataset, groups=groups, folds=folds, top_n=top_n,
        alpha=float(alpha), seed=seed,
        output_dir=Path(output_dir).resolve() if output_dir else None,
        workers=workers, algorithms=tuple(algorithms), hyperparams=hyperparams,
        switches=switches, max_display_genres=max_display)
