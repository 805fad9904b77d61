import numpy as np
import pytest

from recaudit.corpus import RatingTable, _catalog_for_table


def make_table(records, rating_range=None):
    return RatingTable.from_records(records, rating_range)


def make_catalog(table, genre_map):
    """genre_map: external item id -> iterable of genre labels."""
    return _catalog_for_table(table, {i: set(g) for i, g in genre_map.items()})


@pytest.fixture
def tiny_dataset():
    """Four users, four items, mixed genres; rating range [1, 5]."""
    records = [
        (0, 0, 4.0), (0, 1, 3.0), (0, 2, 5.0),
        (1, 0, 2.0), (1, 1, 4.0),
        (2, 1, 1.0), (2, 2, 3.0), (2, 3, 5.0),
        (3, 0, 4.0), (3, 3, 2.0),
    ]
    table = make_table(records, (1.0, 5.0))
    catalog = make_catalog(table, {
        0: {"rock"}, 1: {"pop", "rock"}, 2: {"jazz"}, 3: {"pop"},
    })
    return table, catalog
