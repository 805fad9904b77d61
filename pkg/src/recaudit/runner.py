"""End-to-end audit orchestration and report emission.

``run_audit`` executes load, grouping, cross-validated evaluation,
aggregation, and genre attribution, then writes the report files into the
output directory. Outputs are staged in a scratch directory and moved into
place only on success, so the report directory is either complete or
absent. All randomness flows from the root seed: the fold plan uses it
directly and every (fold, algorithm) fit gets a seed derived from
(root seed, fold, algorithm name).
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import logging
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import AuditConfig
from .corpus import (compute_popularity, dataset_stats, load_dataset,
                     split_user_groups)
from .engines import HyperParams
from .errors import AuditError, StageError
from .evaluation import (EvalSettings, GroupMetrics, aggregate, evaluate_fold,
                         make_folds)
from .genreprobe import (GenreAttribution, genre_popularity, mc_sums_by_genre,
                         normalize_panel, select_display_genres)

log = logging.getLogger(__name__)

REPORT_FILES = ("report.json", "metrics.csv", "genre_mc.csv",
                "genre_popularity.csv", "stats.json")


@dataclass(eq=False)
class AuditReport:
    meta: dict
    config: dict
    stats: dict
    group_summary: dict
    metrics: GroupMetrics
    attributions: list
    genre_pop: object
    genre_names: tuple
    display_genres: dict

    def results_dict(self) -> dict:
        """Fold-averaged summary with significance flags, Table style."""
        out = {}
        for alg in self.metrics.algorithms:
            out[alg] = {}
            for lab in self.metrics.group_labels:
                out[alg][lab] = dict(self.metrics.summary[alg][lab])
            out[alg]["significant_vs_" + self.metrics.group_labels[0]] = {
                m: dict(flags) for m, flags in self.metrics.significant[alg].items()}
        return out

    def to_json_dict(self) -> dict:
        return {
            "meta": self.meta,
            "config": self.config,
            "dataset": self.stats,
            "groups": self.group_summary,
            "results": self.results_dict(),
            "pvalues": self.metrics.pvalues,
        }


def derive_engine_seed(root_seed: int, fold: int, algorithm: str) -> int:
    """Stable per-(fold, algorithm) seed fan-out from the root seed."""
    alg_key = int.from_bytes(hashlib.sha256(algorithm.encode()).digest()[:4], "big")
    seq = np.random.SeedSequence([root_seed, fold, alg_key])
    return int(seq.generate_state(1)[0])


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


_WORKER_CTX: dict = {}


def _worker_init(payload):
    _WORKER_CTX["payload"] = payload


def _worker_run(task):
    fold, algorithm, hp = task
    table, catalog, popularity, plan, settings = _WORKER_CTX["payload"]
    return evaluate_fold(table, catalog, popularity, plan, fold, algorithm,
                         hp, settings)


def _evaluate_all(table, catalog, popularity, plan, config, workers):
    settings = EvalSettings(
        top_n=config.top_n, alpha=config.alpha,
        mc_weighting=config.switches.mc_weighting,
        per_fold_popularity=config.switches.per_fold_popularity)
    tasks = []
    for fold in range(config.folds):
        for alg in config.algorithms:
            hp = dataclasses.replace(
                config.hyperparams,
                seed=derive_engine_seed(config.seed, fold, alg))
            tasks.append((fold, alg, hp))

    if workers > 1:
        payload = (table, catalog, popularity, plan, settings)
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=workers, initializer=_worker_init,
                initargs=(payload,)) as pool:
            results = list(pool.map(_worker_run, tasks))
    else:
        results = [
            evaluate_fold(table, catalog, popularity, plan, fold, alg, hp, settings)
            for fold, alg, hp in tasks
        ]
    return results


def _group_fraction_summary(groups) -> dict:
    out = {}
    for g, label in enumerate(groups.labels):
        frac = np.sort(groups.fraction[groups.members(g)])
        q1, med, q3 = np.percentile(frac, [25, 50, 75])
        out[label] = {
            "n_users": int(frac.size),
            "fraction_min": float(frac.min()),
            "fraction_q1": float(q1),
            "fraction_median": float(med),
            "fraction_q3": float(q3),
            "fraction_max": float(frac.max()),
            "fraction_mean": float(frac.mean()),
        }
    return out


def _attribute_all(results, groups, genre_pop, config):
    """Average each algorithm's per-fold genre MC means across folds."""
    attributions = []
    display = {}
    pop_key = genre_pop.rating_count.sum(axis=0)
    for alg in config.algorithms:
        fold_raws = []
        for r in sorted((r for r in results if r.algorithm == alg),
                        key=lambda r: r.fold):
            sums, counts = mc_sums_by_genre(r.mc, r.profile_genres, groups)
            fold_raws.append(np.divide(sums, counts,
                                       out=np.full_like(sums, np.nan),
                                       where=counts > 0))
        with np.errstate(invalid="ignore"):
            raw = np.nanmean(np.stack(fold_raws), axis=0)
        attribution = GenreAttribution(
            algorithm=alg, raw=raw, normalized=normalize_panel(raw),
            order=genre_pop.order, group_labels=groups.labels)
        attributions.append(attribution)
        if config.max_display_genres is not None:
            display[alg] = select_display_genres(
                attribution, config.max_display_genres, pop_key)
    return attributions, display


def run_audit(config: AuditConfig, out_dir=None, workers=None, seed=None) -> AuditReport:
    """Execute the full audit; write the report files when ``out_dir`` (or
    ``config.output_dir``) is set, and return the in-memory report."""
    t0 = time.perf_counter()
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    if workers is None:
        workers = config.workers
    target = Path(out_dir) if out_dir is not None else config.output_dir

    ds = config.dataset
    loaded = _stage("load", load_dataset, ds.ratings, ds.genres, ds.schema,
                    delimiter=ds.delimiter, rating_range=ds.rating_range,
                    implicit_fill=ds.implicit_fill)
    table, catalog, load_report = loaded

    def _group():
        popularity = compute_popularity(table)
        groups = split_user_groups(table, popularity, config.groups,
                                   basis=config.switches.popularity_basis)
        return popularity, groups

    popularity, groups = _stage("group", _group)
    stats = dataset_stats(table, catalog)
    stats["dropped_items"] = load_report.dropped_items
    stats["dropped_ratings"] = load_report.dropped_ratings

    plan = _stage("evaluate", make_folds, table, config.seed, config.folds)
    results = _stage("evaluate", _evaluate_all, table, catalog, popularity,
                     plan, config, workers)

    metrics = _stage("aggregate", aggregate, results, groups, config.folds)

    genre_pop = _stage("attribute", genre_popularity, table, catalog, groups)
    attributions, display = _stage("attribute", _attribute_all, results,
                                   groups, genre_pop, config)

    truncated = int(sum((r.rec_items < 0).any(axis=1).sum() for r in results))
    meta = {
        "package": "recaudit",
        "version": __version__,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "dataset_name": ds.name,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "truncated_recommendation_lists": truncated,
        "notes": {
            "significance_test": "two-sided Welch t-test, unequal variances, "
                                 "flagged only when p < 0.05 in every fold",
            "display_genre_rule": "largest cross-group range of normalized MC, "
                                  "ties broken by genre popularity",
        },
    }
    report = AuditReport(meta=meta, config=config.resolved_dict(), stats=stats,
                         group_summary=_group_fraction_summary(groups),
                         metrics=metrics, attributions=attributions,
                         genre_pop=genre_pop, genre_names=catalog.genre_names,
                         display_genres=display)
    if target is not None:
        _stage("emit", _emit, report, config, target)
    return report


def dataset_overview(config: AuditConfig) -> dict:
    """Load the dataset and return its stats record (the `stats` command)."""
    ds = config.dataset
    loaded = _stage("load", load_dataset, ds.ratings, ds.genres, ds.schema,
                    delimiter=ds.delimiter, rating_range=ds.rating_range,
                    implicit_fill=ds.implicit_fill)
    stats = dataset_stats(loaded.table, loaded.catalog)
    stats["dropped_items"] = loaded.report.dropped_items
    stats["dropped_ratings"] = loaded.report.dropped_ratings
    return stats


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _emit(report: AuditReport, config: AuditConfig, target: Path):
    target = Path(target)
    if target.exists() and any(target.iterdir()):
        raise FileExistsError(f"output directory {target} already exists and is not empty")
    staging = target.parent / f".{target.name}.staging"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        _write_files(report, config, staging)
        if target.exists():
            target.rmdir()
        staging.replace(target)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def _write_files(report: AuditReport, config: AuditConfig, out: Path):
    metrics = report.metrics
    dataset = config.dataset.name
    labels = metrics.group_labels

    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "dataset", "group", "fold", "metric", "value"])
        for cell in metrics.cells:
            writer.writerow([cell.algorithm, dataset, cell.group, cell.fold,
                             cell.metric, _fmt(cell.value)])
        base = labels[0].lower()
        for alg in metrics.algorithms:
            for metric, per_group in metrics.pvalues[alg].items():
                for lab, per_fold in per_group.items():
                    for fold, p in enumerate(per_fold):
                        writer.writerow([alg, dataset, lab, fold,
                                         f"{metric}_p_vs_{base}", _fmt(p)])

    order = report.genre_pop.order
    with open(out / "genre_mc.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "group", "genre", "raw_mc",
                         "normalized_mc", "rating_count", "user_count"])
        for attribution in report.attributions:
            alg = attribution.algorithm
            keep = report.display_genres.get(alg)
            if keep is None:
                genres = list(order)
            else:
                keep_set = set(keep)
                genres = [c for c in order if c in keep_set]
            for g, lab in enumerate(labels):
                for c in genres:
                    raw = attribution.raw[g, c]
                    norm = attribution.normalized[g, c]
                    writer.writerow([
                        alg, lab, report.genre_names[c],
                        "" if np.isnan(raw) else repr(float(raw)),
                        "" if np.isnan(norm) else repr(float(norm)),
                        int(report.genre_pop.rating_count[g, c]),
                        int(report.genre_pop.user_count[g, c]),
                    ])

    with open(out / "genre_popularity.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "genre", "rating_count", "user_count"])
        for g, lab in enumerate(labels):
            for c in order:
                writer.writerow([lab, report.genre_names[c],
                                 int(report.genre_pop.rating_count[g, c]),
                                 int(report.genre_pop.user_count[g, c])])

    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(report.stats, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
