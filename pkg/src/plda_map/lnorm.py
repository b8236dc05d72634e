"""Length normalisation onto the PLDA concentration ellipsoid.

In latent coordinates the total variance of dimension j is ``eps[j] + 1``, so
typical vectors sit near the surface ``sum_j y_j^2 / (eps[j] + 1) = p``.
Scaling each vector onto that surface is classic LN when ``eps`` is the ML
estimate and LN/MAP when it is a MAP estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .plda import PldaModel


@dataclass(frozen=True, eq=False)
class LnConfig:
    eps: np.ndarray

    def __post_init__(self):
        eps = np.array(getattr(self.eps, "epsilon", self.eps), dtype=float).reshape(-1)
        if np.any(eps < 0):
            raise ValueError("epsilon must be non-negative")
        eps.setflags(write=False)
        object.__setattr__(self, "eps", eps)

    @property
    def p(self) -> int:
        return self.eps.shape[0]

    @property
    def total_variance(self) -> np.ndarray:
        return self.eps + 1.0


def _check(cfg: LnConfig, y: np.ndarray):
    if y.shape[-1] != cfg.p:
        raise DimensionError(f"expected dimension {cfg.p}, got {y.shape[-1]}")


def scale_factor(cfg: LnConfig, x_latent):
    """Factor r putting ``r * x_latent`` on the ellipsoid; one per row for 2-D input."""
    y = np.asarray(x_latent, dtype=float)
    _check(cfg, y)
    q = (y * y / cfg.total_variance).sum(axis=-1)
    if np.any(q == 0):
        raise ValueError("scale factor undefined for a zero latent vector")
    r = np.sqrt(cfg.p) / np.sqrt(q)
    return float(r) if np.ndim(r) == 0 else r


def normalize_latent(cfg: LnConfig, y):
    """Length-normalise vectors already in latent coordinates."""
    y = np.asarray(y, dtype=float)
    r = scale_factor(cfg, y)
    return y * (r[..., None] if np.ndim(r) else r)


def length_normalize(model: PldaModel, cfg: LnConfig, x):
    """Map observed vector(s) to latent coordinates and onto the ellipsoid."""
    return normalize_latent(cfg, model.to_latent(x))


def surface_residual(cfg: LnConfig, y) -> np.ndarray:
    """Relative distance ``|sum y^2/(eps+1) - p| / p`` from the surface."""
    y = np.asarray(y, dtype=float)
    return np.abs((y * y / cfg.total_variance).sum(axis=-1) - cfg.p) / cfg.p
