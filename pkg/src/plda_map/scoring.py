"""Closed-form PLDA likelihood-ratio scoring.

The log-LR of a test vector against an enrollment set is

    log p(x, x_1..x_n) - log p(x) - log p(x_1..x_n)

with each term a class marginal likelihood in latent coordinates. Only the
count, sum and sum of squares of each side enter, so batch scoring works on
those sufficient statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, UnresolvedIdError
from .plda import PldaModel, latent_marginal_loglik

TARGET = "target"
NONTARGET = "nontarget"


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str | None = None

    def __post_init__(self):
        if not self.enroll_id or not self.test_id:
            raise ValueError("trial ids must be non-empty")
        if self.label not in (None, TARGET, NONTARGET):
            raise ValueError(f"bad trial label {self.label!r}")

    @property
    def is_target(self) -> bool | None:
        return None if self.label is None else self.label == TARGET


@dataclass(frozen=True)
class TrialSet:
    """Enrollment map (model id -> utterance ids) and the trial list."""

    enrollments: dict
    trials: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        for model_id, utts in self.enrollments.items():
            if not utts:
                raise ValueError(f"enrollment {model_id!r} has no utterances")

    def __len__(self):
        return len(self.trials)

    def without_labels(self) -> TrialSet:
        return TrialSet(self.enrollments, [Trial(t.enroll_id, t.test_id) for t in self.trials])


@dataclass(frozen=True)
class ScoreSet:
    trials: tuple
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).reshape(-1)
        trials = tuple(self.trials)
        if len(trials) != scores.shape[0]:
            raise ValueError("one score per trial required")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        scores.setflags(write=False)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return len(self.trials)

    def labels(self) -> np.ndarray:
        """Boolean target mask; raises if any trial is unlabeled."""
        if any(t.label is None for t in self.trials):
            raise ValueError("score set contains unlabeled trials")
        return np.array([t.label == TARGET for t in self.trials], dtype=bool)

    def with_labels(self, trials: TrialSet) -> ScoreSet:
        """Attach labels from ``trials`` by (enroll, test) key."""
        lookup = {(t.enroll_id, t.test_id): t.label for t in trials.trials}
        relabeled = []
        for t in self.trials:
            key = (t.enroll_id, t.test_id)
            if key not in lookup:
                raise UnresolvedIdError(f"{key[0]} {key[1]}", "trial list")
            relabeled.append(Trial(t.enroll_id, t.test_id, lookup[key]))
        return ScoreSet(relabeled, self.scores)


def _eps_vector(model: PldaModel, eps) -> np.ndarray:
    if eps is None:
        return model.epsilon
    eps = np.asarray(getattr(eps, "epsilon", eps), dtype=float)
    if eps.shape != (model.p,):
        raise DimensionError(f"epsilon has shape {eps.shape}, model dimension is {model.p}")
    return eps


def llr_from_stats(eps, n_enroll, s_enroll, ss_enroll, test):
    """Log-LR from enrollment sufficient statistics and latent test vectors.

    Parameters
    ----------
    eps : ndarray, shape (p,)
    n_enroll : ndarray, shape (T,)
    s_enroll, ss_enroll : ndarray, shape (T, p)
        Sum and sum of squares of the latent enrollment vectors.
    test : ndarray, shape (T, p)
    """
    n = np.asarray(n_enroll, dtype=float)[:, None]
    joint = latent_marginal_loglik(eps, n + 1.0, s_enroll + test, ss_enroll + test * test)
    alone = latent_marginal_loglik(eps, 1.0, test, test * test)
    enrolled = latent_marginal_loglik(eps, n, s_enroll, ss_enroll)
    return (joint - alone - enrolled).sum(axis=-1)


def score_trial(model: PldaModel, eps, enrollment, test) -> float:
    """Log-LR that ``test`` shares a class with the ``enrollment`` vectors.

    ``eps`` replaces the model's between-class variances; pass ``None`` (or the
    ML estimate) for conventional scoring, a MAP estimate for PLDA/MAP.
    """
    enrollment = np.atleast_2d(np.asarray(enrollment, dtype=float))
    if enrollment.shape[0] == 0 or enrollment.size == 0:
        raise ValueError("empty enrollment")
    eps = _eps_vector(model, eps)
    ye = model.to_latent(enrollment)
    yt = model.to_latent(np.asarray(test, dtype=float).reshape(1, -1))
    llr = llr_from_stats(
        eps,
        np.array([ye.shape[0]]),
        ye.sum(axis=0, keepdims=True),
        (ye * ye).sum(axis=0, keepdims=True),
        yt,
    )
    return float(llr[0])


def score_trialset(model: PldaModel, eps, trials: TrialSet, enroll_vectors: dict, test_vectors: dict) -> ScoreSet:
    """Score every trial; output order follows ``trials.trials``.

    ``enroll_vectors`` and ``test_vectors`` map utterance ids to observed
    vectors (they may be the same dict). Latent transforms are computed once
    per id.
    """
    eps = _eps_vector(model, eps)
    if not trials.trials:
        return ScoreSet((), np.zeros(0))

    needed_models = []
    seen = set()
    for t in trials.trials:
        if t.enroll_id not in seen:
            seen.add(t.enroll_id)
            needed_models.append(t.enroll_id)
    stats = {}
    for model_id in needed_models:
        if model_id not in trials.enrollments:
            raise UnresolvedIdError(model_id, "enrollment map")
        utts = trials.enrollments[model_id]
        for u in utts:
            if u not in enroll_vectors:
                raise UnresolvedIdError(u, f"enrollment vectors (model {model_id})")
        y = model.to_latent(np.array([enroll_vectors[u] for u in utts]))
        stats[model_id] = (len(utts), y.sum(axis=0), (y * y).sum(axis=0))

    test_ids = list(dict.fromkeys(t.test_id for t in trials.trials))
    for u in test_ids:
        if u not in test_vectors:
            raise UnresolvedIdError(u, "test vectors")
    test_latent = dict(zip(test_ids, model.to_latent(np.array([test_vectors[u] for u in test_ids]))))

    n = np.array([stats[t.enroll_id][0] for t in trials.trials])
    s = np.array([stats[t.enroll_id][1] for t in trials.trials])
    ss = np.array([stats[t.enroll_id][2] for t in trials.trials])
    x = np.array([test_latent[t.test_id] for t in trials.trials])
    return ScoreSet(trials.trials, llr_from_stats(eps, n, s, ss, x))


def read_trials(path, enrollments: dict | None = None) -> TrialSet:
    trials = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) not in (2, 3):
                raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> [label]'")
            try:
                trials.append(Trial(*fields))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return TrialSet(enrollments or {}, trials)


def read_enrollments(path) -> dict:
    enrollments = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) < 2:
                raise FormatError(f"{path}:{lineno}: enrollment needs at least one utterance")
            if fields[0] in enrollments:
                raise FormatError(f"{path}:{lineno}: duplicate enrollment id {fields[0]!r}")
            enrollments[fields[0]] = tuple(fields[1:])
    return enrollments


def read_trialset(enroll_path, trials_path) -> TrialSet:
    return read_trials(trials_path, read_enrollments(enroll_path))


def write_trials(path, trials: TrialSet):
    with open(path, "w") as fh:
        for t in trials.trials:
            fh.write(" ".join([t.enroll_id, t.test_id] + ([t.label] if t.label else [])) + "\n")


def write_enrollments(path, enrollments: dict):
    with open(path, "w") as fh:
        for model_id, utts in enrollments.items():
            fh.write(" ".join([model_id, *utts]) + "\n")


def write_scores(path, scores: ScoreSet):
    with open(path, "w") as fh:
        for t, s in zip(scores.trials, scores.scores):
            fh.write(f"{t.enroll_id} {t.test_id} {s:.9g}\n")


def read_scores(path) -> ScoreSet:
    trials, values = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) != 3:
                raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> <score>'")
            trials.append(Trial(fields[0], fields[1]))
            try:
                values.append(float(fields[2]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return ScoreSet(trials, np.array(values))
