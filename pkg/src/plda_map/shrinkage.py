"""MAP shrinkage of the PLDA between-class variances.

Treating the K latent class means as K observations of the between-class
Gaussian turns the between-class variances into an ordinary ML covariance
estimate, so a conjugate diagonal Inverse-Wishart prior gives a closed-form
MAP estimate: a count-weighted interpolation between a prior variance
``eps0`` (weight ``alpha``) and the ML estimate (weight K).
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .data import FLOAT_FMT, LabeledDataset
from .errors import DimensionError, FormatError
from .plda import PldaModel

logger = logging.getLogger(__name__)

EPSILON_FLOOR = 1e-6
MIN_CLASS_SIZE = 5


class Provenance(str, enum.Enum):
    ML_EM = "ML_EM"
    VIRTUAL_SAMPLE = "VIRTUAL_SAMPLE"
    MAP = "MAP"


@dataclass(frozen=True, eq=False)
class EpsilonEstimate:
    """Between-class variance vector plus how it was obtained."""

    epsilon: np.ndarray
    provenance: Provenance
    K: int
    alpha: float | None = None
    epsilon0: np.ndarray | None = None

    def __post_init__(self):
        eps = np.array(self.epsilon, dtype=float).reshape(-1)
        if np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise ValueError("epsilon must be non-negative and finite")
        eps.setflags(write=False)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.epsilon0 is not None:
            eps0 = np.array(self.epsilon0, dtype=float).reshape(-1)
            eps0.setflags(write=False)
            object.__setattr__(self, "epsilon0", eps0)

    @property
    def p(self) -> int:
        return self.epsilon.shape[0]

    @classmethod
    def from_model(cls, model: PldaModel) -> EpsilonEstimate:
        return cls(model.epsilon, Provenance.ML_EM, model.K)


@dataclass(frozen=True)
class WishartPrior:
    """Diagonal Inverse-Wishart prior with scale ``phi`` and ``nu`` degrees of freedom."""

    phi: np.ndarray
    nu: float

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        if np.any(phi < 0):
            raise ValueError("phi must be non-negative")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "nu", float(self.nu))
        if self.nu + self.p + 1 < 0:
            raise ValueError(f"nu + p + 1 must be non-negative, got {self.nu + self.p + 1}")

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @classmethod
    def from_interpolation(cls, alpha: float, eps0) -> WishartPrior:
        """The prior equivalent to ``alpha`` virtual samples of variance ``eps0``."""
        eps0 = np.asarray(eps0, dtype=float)
        return cls(alpha * eps0, alpha - eps0.shape[0] - 1)


def inverse_wishart_logpdf_unnorm(prior: WishartPrior, eps) -> float:
    """Log density of the diagonal Inverse-Wishart prior, up to ``-log Z``."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != prior.phi.shape:
        raise DimensionError(f"expected dimension {prior.p}, got {eps.shape}")
    if np.any(eps <= 0):
        raise ValueError("epsilon must be strictly positive")
    return float(-0.5 * (prior.nu + prior.p + 1) * np.log(eps).sum() - 0.5 * (prior.phi / eps).sum())


def latent_class_means(model: PldaModel, data: LabeledDataset):
    """Per-class means of the latent training vectors, plus class sizes."""
    if data.dim != model.p:
        raise DimensionError(f"expected dimension {model.p}, got {data.dim}")
    y = model.to_latent(data.vectors)
    groups = data.classes()
    means = np.array([y[rows].mean(axis=0) for rows in groups.values()])
    counts = np.array([len(rows) for rows in groups.values()])
    return means, counts


def virtual_sample_epsilon(model: PldaModel, data: LabeledDataset, floor: float = EPSILON_FLOOR) -> EpsilonEstimate:
    """Between-class variances from the class means seen as K virtual samples.

    ``eps_j = mean_k(ybar_kj^2) - c`` where ``c = 1/n`` for balanced classes and
    the mean of ``1/n_k`` otherwise. Negative values are floored.
    """
    means, counts = latent_class_means(model, data)
    K = means.shape[0]
    if np.all(counts == counts[0]):
        correction = 1.0 / counts[0]
    else:
        correction = float(np.mean(1.0 / counts))
        if counts.min() < MIN_CLASS_SIZE:
            warnings.warn(
                f"unbalanced classes with min size {counts.min()} < {MIN_CLASS_SIZE}; "
                "virtual-sample correction is approximate",
                stacklevel=2,
            )
    eps = (means * means).sum(axis=0) / K - correction
    return EpsilonEstimate(np.maximum(eps, floor), Provenance.VIRTUAL_SAMPLE, K)


def map_epsilon(eps_ml: EpsilonEstimate, alpha: float, eps0) -> EpsilonEstimate:
    """Interpolate ``eps_ml`` toward ``eps0`` with ``alpha`` virtual prior samples."""
    K = eps_ml.K
    eps0 = _broadcast_eps0(eps0, eps_ml.p)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if np.any(eps0 <= 0):
        raise ValueError("eps0 must be strictly positive")
    if alpha + K == 0:
        raise ValueError("alpha + K must be positive")
    if alpha == 0:
        # (K * eps) / K is not always eps in floating point
        eps = eps_ml.epsilon.copy()
    else:
        eps = (alpha * eps0 + K * eps_ml.epsilon) / (alpha + K)
    return EpsilonEstimate(eps, Provenance.MAP, K, float(alpha), eps0)


def map_epsilon_wishart(eps_ml: EpsilonEstimate, prior: WishartPrior) -> EpsilonEstimate:
    """Posterior mode of the between-class variances under ``prior``."""
    if prior.p != eps_ml.p:
        raise DimensionError(f"prior dimension {prior.p} != epsilon dimension {eps_ml.p}")
    K, p = eps_ml.K, prior.p
    denom = prior.nu + K + p + 1
    if denom <= 0:
        raise ValueError(f"nu + K + p + 1 must be positive, got {denom}")
    prior_count = prior.nu + p + 1
    if prior_count == 0 and not np.any(prior.phi):
        eps = eps_ml.epsilon.copy()
        alpha, eps0 = 0.0, None
    else:
        eps = (prior.phi + K * eps_ml.epsilon) / denom
        alpha = prior_count
        eps0 = prior.phi / prior_count if prior_count > 0 else None
    return EpsilonEstimate(eps, Provenance.MAP, K, alpha, eps0)


def _broadcast_eps0(eps0, p: int) -> np.ndarray:
    eps0 = np.asarray(eps0, dtype=float)
    if eps0.ndim == 0:
        return np.full(p, float(eps0))
    if eps0.shape != (p,):
        raise DimensionError(f"eps0 has shape {eps0.shape}, expected ({p},)")
    return eps0


def _eps0_spec(eps0) -> str:
    if eps0 is None:
        return "-"
    if np.all(eps0 == eps0[0]):
        return FLOAT_FMT.format(eps0[0])
    return ",".join(FLOAT_FMT.format(v) for v in eps0)


def save_epsilon(est: EpsilonEstimate, path):
    alpha = "-" if est.alpha is None else FLOAT_FMT.format(est.alpha)
    lines = [f"{est.provenance.value} {est.K} {alpha} {_eps0_spec(est.epsilon0)}"]
    lines += [FLOAT_FMT.format(v) for v in est.epsilon]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_epsilon(path) -> EpsilonEstimate:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or len(lines[0]) != 4:
        raise FormatError(f"{path}: expected header '<provenance> <K> <alpha> <eps0>'")
    prov, K, alpha, eps0 = lines[0]
    try:
        eps = np.array([float(ln[0]) for ln in lines[1:]])
        provenance = Provenance(prov)
        alpha_val = None if alpha == "-" else float(alpha)
        eps0_val = None
        if eps0 != "-":
            eps0_val = _broadcast_eps0([float(v) for v in eps0.split(",")], len(eps)) \
                if "," in eps0 else np.full(len(eps), float(eps0))
        return EpsilonEstimate(eps, provenance, int(K), alpha_val, eps0_val)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
