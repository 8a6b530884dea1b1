"""MovieLens-1M ingestion, frequency-ordered vocabularies, and temporal splits.

Ratings are treated as implicit positives. Internal ids are contiguous and
frequency-ordered (most frequent in the training split first, ties broken by
ascending external id), which is what the frequency-tier partitions rely on.
Each user's last two actions by timestamp go to validation (second-to-last)
and test (last); users with fewer than three actions keep everything in train.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MovieLensParseError(ValueError):
    """Malformed input line; message carries file and line number."""


@dataclass
class InteractionDataset:
    num_users: int
    num_items: int
    train: np.ndarray          # (N, 3) int64 columns: user, item, timestamp
    validation_items: np.ndarray  # (num_users,) int64, -1 where absent
    test_items: np.ndarray        # (num_users,) int64, -1 where absent
    item_frequency: np.ndarray    # (num_items,) int64 train-split counts
    _user_sets: list | None = field(default=None, repr=False, compare=False)

    def user_train_sets(self) -> list:
        """Per-user set of train items (built once, then reused)."""
        if self._user_sets is None:
            sets = [set() for _ in range(self.num_users)]
            for u, i in zip(self.train[:, 0], self.train[:, 1]):
                sets[u].add(int(i))
            self._user_sets = sets
        return self._user_sets

    def eval_users(self) -> np.ndarray:
        return np.nonzero(self.test_items >= 0)[0]

    def sparsity(self) -> float:
        total = self.num_users * self.num_items
        observed = self.train.shape[0] + int((self.validation_items >= 0).sum()) \
            + int((self.test_items >= 0).sum())
        return 1.0 - observed / total


@dataclass
class GenreTable:
    genres: dict  # internal item id -> tuple of genre strings
    missing_items: set  # rated items without metadata

    def items_with_genre(self, genre: str) -> np.ndarray:
        ids = [i for i, gs in self.genres.items() if genre in gs]
        return np.array(sorted(ids), dtype=np.int64)


def _parse_ratings(path: Path):
    rows = []
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise MovieLensParseError(f"{path}:{lineno}: expected 4 '::' fields")
            try:
                user, item, _rating, ts = int(parts[0]), int(parts[1]), parts[2], int(parts[3])
            except ValueError as exc:
                raise MovieLensParseError(f"{path}:{lineno}: {exc}") from None
            rows.append((user, item, ts))
    return rows


def _parse_movies(path: Path):
    out = {}
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 3:
                raise MovieLensParseError(f"{path}:{lineno}: expected 3 '::' fields")
            try:
                ext_id = int(parts[0])
            except ValueError as exc:
                raise MovieLensParseError(f"{path}:{lineno}: {exc}") from None
            genres = tuple(g for g in parts[2].split("|") if g)
            out[ext_id] = genres
    return out


def _frequency_order(ext_ids: np.ndarray, counts: dict) -> dict:
    """Map external ids to contiguous ids ordered by descending count,
    ties broken by ascending external id."""
    ordered = sorted(set(int(x) for x in ext_ids), key=lambda e: (-counts.get(e, 0), e))
    return {e: i for i, e in enumerate(ordered)}


def build_interactions(rows) -> InteractionDataset:
    """Assemble an InteractionDataset from (user, item, timestamp) triples."""
    by_user: dict = {}
    for order, (u, i, t) in enumerate(rows):
        # stable order index breaks timestamp ties deterministically
        by_user.setdefault(u, []).append((t, order, i))

    train_rows, val_rows, test_rows = [], {}, {}
    for u, actions in by_user.items():
        actions.sort()
        if len(actions) >= 3:
            *rest, val, test = actions
            val_rows[u] = val[2]
            test_rows[u] = test[2]
            train_rows.extend((u, i, t) for t, _, i in rest)
        else:
            train_rows.extend((u, i, t) for t, _, i in actions)

    item_counts: dict = {}
    user_counts: dict = {}
    for u, i, _ in train_rows:
        item_counts[i] = item_counts.get(i, 0) + 1
        user_counts[u] = user_counts.get(u, 0) + 1

    all_items = np.array([i for _, i, _ in rows], dtype=np.int64)
    all_users = np.array([u for u, _, _ in rows], dtype=np.int64)
    item_map = _frequency_order(all_items, item_counts)
    user_map = _frequency_order(all_users, user_counts)

    num_users, num_items = len(user_map), len(item_map)
    train = np.array([(user_map[u], item_map[i], t) for u, i, t in train_rows],
                     dtype=np.int64).reshape(-1, 3)
    validation = np.full(num_users, -1, dtype=np.int64)
    test = np.full(num_users, -1, dtype=np.int64)
    for u, i in val_rows.items():
        validation[user_map[u]] = item_map[i]
    for u, i in test_rows.items():
        test[user_map[u]] = item_map[i]

    freq = np.zeros(num_items, dtype=np.int64)
    for i, c in item_counts.items():
        freq[item_map[i]] = c

    ds = InteractionDataset(num_users, num_items, train, validation, test, freq)
    ds._ext_item_map = {v: k for k, v in item_map.items()}  # internal -> external
    ds._item_map = item_map
    return ds


def load_movielens(ratings_path, movies_path) -> tuple[InteractionDataset, GenreTable]:
    """Load the `::`-delimited MovieLens-1M files."""
    rows = _parse_ratings(Path(ratings_path))
    ds = build_interactions(rows)
    ext_genres = _parse_movies(Path(movies_path))
    genres, missing = {}, set()
    for ext, internal in ds._item_map.items():
        if ext in ext_genres:
            genres[internal] = ext_genres[ext]
        else:
            missing.add(internal)
    return ds, GenreTable(genres, missing)


def split_counts(dataset: InteractionDataset) -> list[tuple[int, int]]:
    """(rank, train-frequency) rows, rank 1 = most frequent item."""
    return [(rank + 1, int(c)) for rank, c in enumerate(dataset.item_frequency)]


def write_split_counts_csv(dataset: InteractionDataset, path) -> None:
    """Item rank-vs-frequency table with log-log columns for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "frequency", "log10_rank", "log10_frequency"])
        for rank, count in split_counts(dataset):
            log_c = np.log10(count) if count > 0 else ""
            writer.writerow([rank, count, np.log10(rank), log_c])
