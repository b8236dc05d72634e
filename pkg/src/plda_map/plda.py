"""Two-covariance PLDA in canonical form.

The model is ``x = mu0 + M y``, where in latent coordinates ``y`` every
dimension is independent: the class mean has variance ``epsilon[j]`` and the
within-class noise has unit variance. Training is maximum likelihood via EM on
the between/within covariances, followed by simultaneous diagonalisation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .data import FLOAT_FMT, LabeledDataset
from .errors import ConvergenceWarning, DimensionError, FormatError, SingularCovarianceError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 200
    tol: float = 1e-7
    epsilon_floor: float = 1e-6
    within_floor: float = 1e-6


@dataclass(frozen=True, eq=False)
class MomentStats:
    """First and second moments of a labeled dataset.

    Both scatters are normalised second moments: ``within_scatter`` averages
    over all N samples about their class means, ``between_scatter`` averages
    over the K class means about the global mean (each class counted once).
    """

    global_mean: np.ndarray
    class_means: dict
    class_counts: dict
    within_scatter: np.ndarray
    between_scatter: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(sum(self.class_counts.values()))

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)


def accumulate_stats(data: LabeledDataset) -> MomentStats:
    x = data.vectors
    n_total, p = x.shape
    global_mean = x.mean(axis=0)
    means, counts = {}, {}
    within = np.zeros((p, p))
    for lab, rows in data.classes().items():
        members = x[rows]
        mk = members.mean(axis=0)
        d = members - mk
        within += d.T @ d
        means[lab] = mk
        counts[lab] = len(rows)
    within /= n_total
    centred = np.array(list(means.values())) - global_mean
    between = centred.T @ centred / len(means)
    return MomentStats(
        global_mean=global_mean,
        class_means=means,
        class_counts=counts,
        within_scatter=0.5 * (within + within.T),
        between_scatter=0.5 * (between + between.T),
    )


@dataclass(frozen=True, eq=False)
class PldaModel:
    """Canonical-form PLDA parameters.

    Attributes
    ----------
    mu0 : ndarray, shape (p,)
    M : ndarray, shape (p, p)
        Maps latent coordinates to observed ones, ``x = mu0 + M y``.
    epsilon : ndarray, shape (p,)
        Between-class variances in latent coordinates, sorted descending.
    class_counts : tuple of int
        Training samples per class.
    """

    mu0: np.ndarray
    M: np.ndarray
    epsilon: np.ndarray
    class_counts: tuple = field(default=())

    def __post_init__(self):
        mu0 = np.array(self.mu0, dtype=float).reshape(-1)
        M = np.array(self.M, dtype=float)
        eps = np.array(self.epsilon, dtype=float).reshape(-1)
        p = mu0.shape[0]
        if M.shape != (p, p) or eps.shape != (p,):
            raise DimensionError(
                f"inconsistent shapes: mu0 {mu0.shape}, M {M.shape}, epsilon {eps.shape}"
            )
        if np.any(eps <= 0) or not np.all(np.isfinite(eps)):
            raise ValueError("epsilon must be strictly positive and finite")
        sv = np.linalg.svd(M, compute_uv=False)
        if not np.all(np.isfinite(sv)) or sv[-1] <= 1e-12 * sv[0]:
            raise SingularCovarianceError("transform M is singular")
        for arr in (mu0, M, eps):
            arr.setflags(write=False)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "class_counts", tuple(int(n) for n in self.class_counts))

    @property
    def p(self) -> int:
        return self.mu0.shape[0]

    @property
    def K(self) -> int:
        return len(self.class_counts)

    @cached_property
    def latent_transform(self) -> np.ndarray:
        """``M^-1``; rows project centred observations to latent coordinates."""
        return np.linalg.inv(self.M)

    @cached_property
    def log_abs_det_M(self) -> float:
        return float(np.linalg.slogdet(self.M)[1])

    @property
    def between_covariance(self) -> np.ndarray:
        """S_B = M diag(epsilon) M^T in observed coordinates."""
        return (self.M * self.epsilon) @ self.M.T

    @property
    def within_covariance(self) -> np.ndarray:
        return self.M @ self.M.T

    def to_latent(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.p:
            raise DimensionError(f"expected dimension {self.p}, got {x.shape[-1]}")
        return (x - self.mu0) @ self.latent_transform.T

    def from_latent(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.p:
            raise DimensionError(f"expected dimension {self.p}, got {y.shape[-1]}")
        return self.mu0 + y @ self.M.T

    @classmethod
    def identity(cls, epsilon, class_counts=()) -> PldaModel:
        """A model whose latent frame is the input frame (mu0 = 0, M = I)."""
        eps = np.asarray(epsilon, dtype=float)
        return cls(np.zeros(eps.shape[0]), np.eye(eps.shape[0]), eps, class_counts)

    def with_epsilon(self, epsilon) -> PldaModel:
        return PldaModel(self.mu0, self.M, epsilon, self.class_counts)


def to_latent(model: PldaModel, x) -> np.ndarray:
    return model.to_latent(x)


def from_latent(model: PldaModel, y) -> np.ndarray:
    return model.from_latent(y)


def _whitener(within: np.ndarray, floor: float) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (within + within.T))
    top = lam[-1]
    if not top > 0 or lam[0] < floor * top:
        raise SingularCovarianceError(
            f"within-class covariance is rank deficient "
            f"(eigenvalue ratio {lam[0] / top if top > 0 else 0.0:.3g} < {floor:g})"
        )
    return (U / np.sqrt(lam)).T


def canonicalize(within, between, within_floor: float = 1e-6):
    """Simultaneously diagonalise a within/between covariance pair.

    Returns ``(T, eps)`` with ``T W T^T = I`` and ``T B T^T = diag(eps)``,
    ``eps`` sorted descending. Each row of ``T`` has its largest-magnitude
    entry positive, so the result does not depend on eigensolver sign choices.
    """
    T = _whitener(np.asarray(within, dtype=float), within_floor)
    bw = T @ between @ T.T
    eps, V = np.linalg.eigh(0.5 * (bw + bw.T))
    order = np.argsort(-eps, kind="stable")
    T = V[:, order].T @ T
    pivots = np.abs(T).argmax(axis=1)
    signs = np.sign(T[np.arange(T.shape[0]), pivots])
    return T * signs[:, None], eps[order]


def latent_marginal_loglik(eps, n, s, ss) -> np.ndarray:
    """Per-dimension log marginal likelihood of one class in latent space.

    For ``n`` unit-variance observations of a class mean with variance ``eps``,
    integrating the mean out leaves a Gaussian with covariance
    ``I + eps * 1 1^T``, whose log density depends only on the sum ``s`` and
    sum of squares ``ss`` of the observations.

    All arguments broadcast against each other; the result has the broadcast
    shape.
    """
    eps = np.asarray(eps, dtype=float)
    n = np.asarray(n, dtype=float)
    prec = 1.0 + n * eps
    return -0.5 * (n * LOG_2PI + np.log(prec) + ss - eps / prec * s * s)


def class_marginal_loglik(model: PldaModel, samples, eps=None) -> float:
    """Log density of one class's samples with the class mean integrated out.

    ``eps`` overrides the model's between-class variances (e.g. with a MAP
    estimate). The value is a density in observed coordinates.
    """
    y = model.to_latent(np.atleast_2d(np.asarray(samples, dtype=float)))
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty sample list")
    eps = model.epsilon if eps is None else np.asarray(eps, dtype=float)
    per_dim = latent_marginal_loglik(eps, n, y.sum(axis=0), (y * y).sum(axis=0))
    return float(per_dim.sum() - n * model.log_abs_det_M)


def _em_loglik(T, eps, z, counts, within_sum, n_total):
    # z: latent class means (K, p); within_sum: unnormalised within scatter
    prec = 1.0 + counts[:, None] * eps
    per_class = (
        -0.5 * counts[:, None] * LOG_2PI
        - 0.5 * np.log(prec)
        - 0.5 * counts[:, None] * z * z / prec
    )
    within_term = -0.5 * np.trace(T @ within_sum @ T.T)
    logdet = np.linalg.slogdet(T)[1]
    return float(per_class.sum() + within_term + n_total * logdet)


def train_ml(data: LabeledDataset, cfg: TrainConfig | None = None, callback=None) -> PldaModel:
    """Maximum-likelihood two-covariance PLDA by EM.

    The global mean is fixed at the sample mean. ``callback(iteration, loglik)``
    is invoked once per evaluated parameter set with the total training
    log-likelihood, which EM never decreases.
    """
    cfg = cfg or TrainConfig()
    stats = accumulate_stats(data)
    K, p = stats.n_classes, data.dim
    n_total = stats.n_samples
    if p > n_total:
        raise SingularCovarianceError(f"dimension {p} exceeds sample count {n_total}")

    mu0 = stats.global_mean
    centred = np.array(list(stats.class_means.values())) - mu0
    counts = np.array(list(stats.class_counts.values()), dtype=float)
    within_sum = stats.within_scatter * n_total
    W = stats.within_scatter.copy()
    B = stats.between_scatter.copy()

    prev = -np.inf
    converged = False
    for it in range(cfg.max_iters + 1):
        T, eps = canonicalize(W, B, cfg.within_floor)
        eps = np.maximum(eps, 0.0)
        z = centred @ T.T
        ll = _em_loglik(T, eps, z, counts, within_sum, n_total)
        if callback is not None:
            callback(it, ll)
        if it > 0 and (ll - prev) / K < cfg.tol:
            converged = True
            break
        if it == cfg.max_iters:
            break
        prev = ll

        # E-step: Gaussian posterior of each latent class mean.
        denom = 1.0 + counts[:, None] * eps
        post_mean = counts[:, None] * eps / denom * z
        post_var = eps / denom
        # M-step in latent coordinates, then back to observed ones.
        b_lat = (np.diag(post_var.sum(axis=0)) + post_mean.T @ post_mean) / K
        resid = z - post_mean
        w_lat = (
            T @ within_sum @ T.T
            + (counts[:, None] * resid).T @ resid
            + np.diag((counts[:, None] * post_var).sum(axis=0))
        ) / n_total
        T_inv = np.linalg.inv(T)
        B = T_inv @ b_lat @ T_inv.T
        W = T_inv @ w_lat @ T_inv.T
        B = 0.5 * (B + B.T)
        W = 0.5 * (W + W.T)

    if converged:
        logger.info("EM converged after %d iterations, loglik/class %.6f", it, ll / K)
    else:
        warnings.warn(
            f"EM did not converge within {cfg.max_iters} iterations", ConvergenceWarning, stacklevel=2
        )

    return PldaModel(
        mu0=mu0,
        M=np.linalg.inv(T),
        epsilon=np.maximum(eps, cfg.epsilon_floor),
        class_counts=tuple(int(n) for n in counts),
    )


def save_model(model: PldaModel, path):
    fmt = FLOAT_FMT.format
    lines = [
        "# plda-model",
        f"p {model.p}",
        f"K {model.K}",
        "class_counts " + " ".join(str(n) for n in model.class_counts),
        "mu0 " + " ".join(fmt(v) for v in model.mu0),
    ]
    lines += ["M " + " ".join(fmt(v) for v in row) for row in model.M]
    lines.append("epsilon " + " ".join(fmt(v) for v in model.epsilon))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> PldaModel:
    fields: dict = {"M": []}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            key, values = parts[0], parts[1:]
            if key == "M":
                fields["M"].append([float(v) for v in values])
            elif key in ("p", "K"):
                fields[key] = int(values[0])
            elif key == "class_counts":
                fields[key] = [int(v) for v in values]
            elif key in ("mu0", "epsilon"):
                fields[key] = [float(v) for v in values]
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
    missing = {"p", "K", "class_counts", "mu0", "epsilon"} - fields.keys()
    if missing:
        raise FormatError(f"{path}: missing keys {sorted(missing)}")
    model = PldaModel(fields["mu0"], fields["M"], fields["epsilon"], fields["class_counts"])
    if model.p != fields["p"] or model.K != fields["K"]:
        raise FormatError(f"{path}: header p/K disagree with stored arrays")
    return model
