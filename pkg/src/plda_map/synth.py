"""Synthetic PLDA corpora with known parameters.

Latent class means have covariance ``diag(eps_true)``; with ``tail="student"``
they follow a multivariate Student-t (3 degrees of freedom) rescaled to that
covariance, so a few classes lie far out. Within-class noise is standard
normal in latent space. Observed vectors are ``mu0 + M y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset, write_vectors
from .scoring import NONTARGET, TARGET, Trial, TrialSet, write_enrollments, write_trials

STUDENT_DOF = 3.0
TAILS = ("gauss", "student")
DEFAULT_SPREAD = 0.5
# prior weights on the scale of a 60-class training set
SMALL_K_ALPHA_GRID = (0.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0)


def heavy_tailed_epsilon(rng: np.random.Generator, p: int, spread: float = DEFAULT_SPREAD) -> np.ndarray:
    """Log-normal between-class variances rescaled to mean 1, sorted descending."""
    eps = np.exp(spread * rng.standard_normal(p))
    return np.sort(eps / eps.mean())[::-1]


def sample_latent_means(rng, eps, n_classes: int, tail: str = "gauss") -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    z = rng.standard_normal((n_classes, eps.shape[0]))
    if tail == "student":
        w = rng.chisquare(STUDENT_DOF, size=(n_classes, 1)) / STUDENT_DOF
        # unit covariance after dividing by sqrt(w) needs (dof-2)/dof
        z = z / np.sqrt(w) * np.sqrt((STUDENT_DOF - 2.0) / STUDENT_DOF)
    elif tail != "gauss":
        raise ValueError(f"unknown tail {tail!r}; expected one of {TAILS}")
    return z * np.sqrt(eps)


def random_transform(rng, p: int, cond: float = 10.0) -> np.ndarray:
    """Random invertible matrix with singular values spread over [1, cond]."""
    q1, _ = np.linalg.qr(rng.standard_normal((p, p)))
    q2, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return (q1 * np.geomspace(1.0, cond, p)) @ q2


@dataclass(frozen=True, eq=False)
class TrialCorpus:
    """Unlabeled vectors keyed by utterance id, with enrollments and trials."""

    vectors: dict
    trials: TrialSet


@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    train: LabeledDataset
    dev: TrialCorpus
    eval: TrialCorpus
    eps_true: np.ndarray
    mu0: np.ndarray
    M: np.ndarray


def _sample_vectors(rng, eps, mu0, M, n_classes, per_class, tail):
    means = sample_latent_means(rng, eps, n_classes, tail)
    latent = np.repeat(means, per_class, axis=0) + rng.standard_normal((n_classes * per_class, len(eps)))
    return mu0 + latent @ M.T


def make_trial_corpus(rng, eps, mu0, M, n_classes, per_class, tail, prefix, n_enroll=1) -> TrialCorpus:
    """Every enrolled class against every held-out test utterance."""
    if per_class <= n_enroll:
        raise ValueError("need more utterances per class than enrollment utterances")
    x = _sample_vectors(rng, eps, mu0, M, n_classes, per_class, tail)
    vectors, enrollments, tests = {}, {}, []
    for k in range(n_classes):
        utts = [f"{prefix}s{k:04d}u{i:02d}" for i in range(per_class)]
        for i, u in enumerate(utts):
            vectors[u] = x[k * per_class + i]
        enrollments[f"{prefix}s{k:04d}"] = tuple(utts[:n_enroll])
        tests += [(k, u) for u in utts[n_enroll:]]
    trials = [
        Trial(f"{prefix}s{k:04d}", u, TARGET if k == kt else NONTARGET)
        for k in range(n_classes)
        for kt, u in tests
    ]
    return TrialCorpus(vectors, TrialSet(enrollments, trials))


def make_corpus(
    seed: int,
    classes: int = 60,
    per_class: int = 10,
    dim: int = 50,
    tail: str = "student",
    eval_classes: int = 100,
    eval_per_class: int = 4,
    spread: float = DEFAULT_SPREAD,
    transform: bool = True,
) -> SyntheticCorpus:
    """Train set plus disjoint-speaker dev and eval trial sets from one seed."""
    rng = np.random.default_rng(seed)
    eps = heavy_tailed_epsilon(rng, dim, spread)
    if transform:
        mu0 = rng.standard_normal(dim)
        M = random_transform(rng, dim)
    else:
        mu0, M = np.zeros(dim), np.eye(dim)
    x = _sample_vectors(rng, eps, mu0, M, classes, per_class, tail)
    labels = [f"spk{k:04d}" for k in range(classes) for _ in range(per_class)]
    ids = [f"spk{k:04d}-{i:02d}" for k in range(classes) for i in range(per_class)]
    train = LabeledDataset(labels, x, ids)
    dev = make_trial_corpus(rng, eps, mu0, M, eval_classes, eval_per_class, tail, "dev")
    ev = make_trial_corpus(rng, eps, mu0, M, eval_classes, eval_per_class, tail, "eval")
    return SyntheticCorpus(train, dev, ev, eps, mu0, M)


def write_corpus(corpus: SyntheticCorpus, outdir) -> dict:
    """Write all corpus files; returns a pipeline config pointing at them."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_vectors(out / "train.vec", corpus.train.ids, corpus.train.vectors, corpus.train.labels)
    for name, part in (("dev", corpus.dev), ("eval", corpus.eval)):
        write_vectors(out / f"{name}.vec", list(part.vectors), np.array(list(part.vectors.values())))
        write_enrollments(out / f"{name}.enroll", part.trials.enrollments)
        write_trials(out / f"{name}.trials", part.trials)
    with open(out / "eps_true.txt", "w") as fh:
        fh.writelines(f"{v:.17g}\n" for v in corpus.eps_true)
    return {
        "train_vectors": str(out / "train.vec"),
        "dev_vectors": str(out / "dev.vec"),
        "dev_enroll": str(out / "dev.enroll"),
        "dev_trials": str(out / "dev.trials"),
        "eval_vectors": str(out / "eval.vec"),
        "eval_enroll": str(out / "eval.enroll"),
        "eval_trials": str(out / "eval.trials"),
    }
