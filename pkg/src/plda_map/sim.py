"""Monte-Carlo spread of the ML variance estimate for small samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DISTRIBUTIONS = ("gaussian", "laplacian")


@dataclass(frozen=True)
class SimSpec:
    distribution: str = "gaussian"
    true_variance: float = 1.0
    n_grid: tuple = (4, 8, 16, 32, 64, 128)
    repetitions: int = 10_000
    seed: int = 0
    known_mean: bool = False
    chunk_elements: int = 4_000_000

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.true_variance <= 0:
            raise ValueError("true_variance must be positive")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not self.n_grid or min(self.n_grid) < 2:
            raise ValueError("every sample count must be >= 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def _draw(rng, spec: SimSpec, shape):
    if spec.distribution == "gaussian":
        return rng.normal(0.0, np.sqrt(spec.true_variance), size=shape)
    # Laplace(b) has variance 2 b^2
    return rng.laplace(0.0, np.sqrt(spec.true_variance / 2.0), size=shape)


def gaussian_var_of_var(n: int, variance: float = 1.0, known_mean: bool = False) -> float:
    """Exact variance of the 1/n variance estimator for Gaussian samples."""
    if known_mean:
        return 2.0 * variance**2 / n
    return 2.0 * variance**2 * (n - 1) / n**2


def variance_of_variance(spec: SimSpec) -> list:
    """For each n, the variance over repetitions of the ML (1/n) variance estimate.

    Each grid point draws from its own child of ``spec.seed``.
    """
    children = np.random.SeedSequence(spec.seed).spawn(len(spec.n_grid))
    out = []
    for n, child in zip(spec.n_grid, children):
        rng = np.random.default_rng(child)
        per_chunk = max(1, spec.chunk_elements // n)
        estimates = []
        remaining = spec.repetitions
        while remaining > 0:
            reps = min(per_chunk, remaining)
            x = _draw(rng, spec, (reps, n))
            if spec.known_mean:
                estimates.append((x * x).mean(axis=1))
            else:
                estimates.append(x.var(axis=1))
            remaining -= reps
        sigma = np.concatenate(estimates)
        out.append((n, float(sigma.var())))
    return out


def write_tsv(path, rows, header=("n", "var_of_var")):
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join([str(row[0])] + [f"{v:.9g}" for v in row[1:]]) + "\n")
