"""Bundled synthetic dataset.

Three cohorts of 300 users rate 150 items (30 head, 120 long-tail): one
cohort draws almost exclusively from the long tail, one mixes, one sticks
to the head. This makes the popularity-inclination split recover the
cohorts and gives the audit a dataset where the least mainstream group is
dominated by long-tail items. A niche genre lives only on the least
popular items, so genre attribution has something to find.

``python -m recaudit.synthetic OUTDIR`` materializes the CSV files plus a
ready-to-run config.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .corpus import GenreCatalog, RatingTable, _catalog_for_table

N_PER_COHORT = 300
N_HEAD = 30
N_TAIL = 120
RATING_RANGE = (1.0, 5.0)
DEFAULT_SEED = 7

GENRES = ("acoustic", "classical", "electronic", "folk", "hiphop",
          "jazz", "metal", "pop", "rock", "underground")

# (head share, ratings per user range) per cohort
_COHORTS = (
    (0.15, (18, 32)),   # tail-heavy: the LowPop analog
    (0.50, (18, 32)),
    (0.85, (18, 32)),
)


def _item_genres(rng):
    """Genre sets per item: head items stay mainstream, the last stretch of
    the tail carries the niche genre."""
    n_items = N_HEAD + N_TAIL
    genre_map = {}
    for item in range(n_items):
        if item < N_HEAD:
            pool = np.arange(0, 8)
        elif item >= N_HEAD + 90:
            genre_map[item] = {GENRES[9]}
            if rng.random() < 0.5:
                genre_map[item].add(GENRES[int(rng.integers(2, 8))])
            continue
        else:
            pool = np.arange(2, 9)
        count = int(rng.integers(1, 3))
        picks = rng.choice(pool, size=count, replace=False)
        genre_map[item] = {GENRES[int(g)] for g in picks}
    return genre_map


def generate_synthetic(seed: int = DEFAULT_SEED):
    """Deterministic records and genre map of the synthetic dataset."""
    rng = np.random.default_rng(seed)
    genre_map = _item_genres(rng)
    item_quality = np.clip(rng.normal(3.4, 0.7, N_HEAD + N_TAIL), 1.2, 4.8)
    head = np.arange(N_HEAD)
    tail = np.arange(N_HEAD, N_HEAD + N_TAIL)
    # tail-heavy users gravitate toward the niche end of the tail
    niche_weight = np.ones(N_TAIL)
    niche_weight[90:] = 3.0
    niche_p = niche_weight / niche_weight.sum()

    records = []
    user = 0
    for cohort, (head_share, (lo, hi)) in enumerate(_COHORTS):
        for _ in range(N_PER_COHORT):
            n_ratings = int(rng.integers(lo, hi + 1))
            n_head = min(int(round(n_ratings * head_share)), N_HEAD)
            n_tail = min(n_ratings - n_head, N_TAIL)
            items = np.concatenate([
                rng.choice(head, size=n_head, replace=False),
                rng.choice(tail, size=n_tail, replace=False,
                           p=niche_p if cohort == 0 else None),
            ])
            shift = rng.normal(0.0, 0.5)
            noise = rng.normal(0.0, 0.6, items.size)
            ratings = np.clip(np.rint(item_quality[items] + shift + noise), 1, 5)
            for item, value in zip(items.tolist(), ratings.tolist()):
                records.append((user, item, float(value)))
            user += 1
    return records, genre_map


def synthetic_tables(seed: int = DEFAULT_SEED) -> tuple[RatingTable, GenreCatalog]:
    """The synthetic dataset as in-memory corpus structures."""
    records, genre_map = generate_synthetic(seed)
    table = RatingTable.from_records(records, RATING_RANGE)
    catalog = _catalog_for_table(table, genre_map)
    return table, catalog


def write_synthetic_dataset(out_dir, seed: int = DEFAULT_SEED) -> dict:
    """Write ratings.csv, genres.csv, and a ready-to-run config.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, genre_map = generate_synthetic(seed)
    ratings_path = out / "ratings.csv"
    genres_path = out / "genres.csv"
    with open(ratings_path, "w", encoding="utf-8") as fh:
        fh.write("user,item,rating\n")
        for u, i, v in records:
            fh.write(f"{u},{i},{v:g}\n")
    with open(genres_path, "w", encoding="utf-8") as fh:
        fh.write("item,genres\n")
        for item in sorted(genre_map):
            fh.write(f"{item},{'|'.join(sorted(genre_map[item]))}\n")
    config = {
        "dataset": {
            "ratings": "ratings.csv",
            "genres": "genres.csv",
            "schema": "explicit",
            "rating_range": list(RATING_RANGE),
            "name": "synthetic",
        },
        "seed": seed,
        "output_dir": str(out / "report"),
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return {"ratings": ratings_path, "genres": genres_path, "config": config_path}


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Write the bundled synthetic dataset and a demo config.")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args(argv)
    paths = write_synthetic_dataset(args.out_dir, args.seed)
    print(f"wrote {paths['ratings']}, {paths['genres']}, {paths['config']}")


if __name__ == "__main__":
    main()
