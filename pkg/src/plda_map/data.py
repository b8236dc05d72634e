"""Labeled vector collections and the whitespace-separated vector file format.

A vector file holds one record per line::

    <utterance-id> <class-id> <v1> ... <vp>     # labeled
    <utterance-id> <v1> ... <vp>                # unlabeled

Blank lines and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError, FormatError

FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Class-labeled vectors, one row of ``vectors`` per entry of ``labels``.

    Classes are ordered by first appearance, which fixes the order of every
    per-class statistic derived from the dataset.
    """

    labels: tuple
    vectors: np.ndarray
    ids: tuple | None = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise DatasetError(f"vectors must be a 2-D array, got shape {vectors.shape}")
        if vectors.shape[0] == 0:
            raise DatasetError("empty dataset")
        if vectors.shape[1] == 0:
            raise DatasetError("vectors have dimension 0")
        labels = tuple(self.labels)
        if len(labels) != vectors.shape[0]:
            raise DatasetError(f"{len(labels)} labels for {vectors.shape[0]} vectors")
        if self.ids is not None and len(self.ids) != len(labels):
            raise DatasetError(f"{len(self.ids)} ids for {len(labels)} vectors")
        if not np.all(np.isfinite(vectors)):
            raise DatasetError("vectors contain non-finite values")
        if len(set(labels)) < 2:
            raise DatasetError("need at least 2 distinct class labels")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @classmethod
    def from_pairs(cls, pairs) -> LabeledDataset:
        """Build from an iterable of ``(label, vector)`` pairs."""
        pairs = list(pairs)
        if not pairs:
            raise DatasetError("empty dataset")
        dims = {len(np.atleast_1d(v)) for _, v in pairs}
        if len(dims) != 1:
            raise DatasetError(f"inconsistent vector dimensions {sorted(dims)}")
        labels = [lab for lab, _ in pairs]
        vectors = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for _, v in pairs])
        return cls(labels, vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def classes(self) -> dict:
        """Map each label to the row indices of its members, in first-seen order."""
        groups: dict = {}
        for row, lab in enumerate(self.labels):
            groups.setdefault(lab, []).append(row)
        return {lab: np.array(rows) for lab, rows in groups.items()}

    def class_vectors(self) -> dict:
        return {lab: self.vectors[rows] for lab, rows in self.classes().items()}

    def transform(self, fn) -> LabeledDataset:
        """Apply ``fn`` to the (N, p) vector matrix, keeping labels and ids."""
        return LabeledDataset(self.labels, fn(self.vectors), self.ids)


def read_vectors(path, labeled: bool):
    """Read a vector file.

    Returns
    -------
    ids : list of str
    labels : list of str or None
        ``None`` when ``labeled`` is false.
    vectors : ndarray, shape (N, p)
    """
    ids, labels, rows = [], [], []
    skip = 2 if labeled else 1
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) <= skip:
                raise FormatError(f"{path}:{lineno}: expected id{' class' if labeled else ''} and values")
            try:
                values = [float(v) for v in fields[skip:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if rows and len(values) != len(rows[0]):
                raise FormatError(
                    f"{path}:{lineno}: dimension {len(values)} differs from {len(rows[0])}"
                )
            ids.append(fields[0])
            if labeled:
                labels.append(fields[1])
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no vectors")
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate utterance ids")
    return ids, (labels if labeled else None), np.array(rows)


def read_dataset(path) -> LabeledDataset:
    ids, labels, vectors = read_vectors(path, labeled=True)
    return LabeledDataset(labels, vectors, ids)


def read_vector_map(path) -> dict:
    """Read an unlabeled vector file into ``{utt_id: vector}``."""
    ids, _, vectors = read_vectors(path, labeled=False)
    return dict(zip(ids, vectors))


def write_vectors(path, ids, vectors, labels=None):
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    with open(path, "w") as fh:
        for row, ident in enumerate(ids):
            head = [str(ident)] if labels is None else [str(ident), str(labels[row])]
            fh.write(" ".join(head + [FLOAT_FMT.format(v) for v in vectors[row]]) + "\n")


def write_vector_map(path, vectors: dict):
    write_vectors(path, list(vectors), np.array(list(vectors.values())))


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
