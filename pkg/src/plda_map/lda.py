"""Fisher LDA dimension reduction ahead of PLDA training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FLOAT_FMT, LabeledDataset
from .errors import DimensionError, FormatError
from .plda import TrainConfig, accumulate_stats, canonicalize


@dataclass(frozen=True, eq=False)
class LdaProjection:
    """``y = basis @ (x - mean)``; rows of ``basis`` are within-class orthonormal."""

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        basis = np.atleast_2d(np.array(self.basis, dtype=float))
        if basis.shape[1] != mean.shape[0] or not 1 <= basis.shape[0] <= basis.shape[1]:
            raise DimensionError(f"basis shape {basis.shape} incompatible with mean {mean.shape}")
        if np.linalg.matrix_rank(basis) != basis.shape[0]:
            raise ValueError("LDA basis is rank deficient")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def d_in(self) -> int:
        return self.basis.shape[1]

    @property
    def d_out(self) -> int:
        return self.basis.shape[0]

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"expected dimension {self.d_in}, got {x.shape[-1]}")
        return (x - self.mean) @ self.basis.T


def fit_lda(data: LabeledDataset, d_out: int, within_floor: float = TrainConfig.within_floor) -> LdaProjection:
    """Top ``d_out`` generalized eigenvectors of (between, within) scatter.

    ``d_out`` may equal the input dimension, in which case the projection is
    an invertible whitening rotation rather than a reduction. Equal
    eigenvalues keep their eigensolver order.
    """
    stats = accumulate_stats(data)
    d_in = data.dim
    K = stats.n_classes
    if d_out < 1:
        raise ValueError("d_out must be positive")
    if d_out != d_in and d_out > min(d_in, K - 1):
        raise ValueError(f"d_out={d_out} exceeds min(d_in={d_in}, K-1={K - 1})")
    T, eigvals = canonicalize(stats.within_scatter, stats.between_scatter, within_floor)
    return LdaProjection(stats.global_mean, T[:d_out], eigvals[:d_out])


def save_lda(lda: LdaProjection, path):
    fmt = FLOAT_FMT.format
    lines = ["# lda", "mean " + " ".join(fmt(v) for v in lda.mean)]
    lines += ["row " + " ".join(fmt(v) for v in row) for row in lda.basis]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lda(path) -> LdaProjection:
    mean, rows = None, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "mean":
                mean = [float(v) for v in parts[1:]]
            elif parts[0] == "row":
                rows.append([float(v) for v in parts[1:]])
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {parts[0]!r}")
    if mean is None or not rows:
        raise FormatError(f"{path}: missing mean or basis rows")
    return LdaProjection(mean, rows)
