"""Equal error rate on the ROC convex hull."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FLOAT_FMT
from .scoring import ScoreSet


@dataclass(frozen=True)
class EvalReport:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_target <= 0 or self.n_nontarget <= 0:
            raise ValueError("report needs target and nontarget trials")

    def to_text(self) -> str:
        lines = [
            f"eer {FLOAT_FMT.format(self.eer)}",
            f"threshold {FLOAT_FMT.format(self.threshold)}",
            f"n_target {self.n_target}",
            f"n_nontarget {self.n_nontarget}",
        ]
        lines += [f"config.{k} {v}" for k, v in self.config.items()]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def operating_points(target_scores, nontarget_scores):
    """Miss and false-alarm rates for every distinct accept threshold.

    A trial is accepted when its score is >= the threshold. Thresholds are the
    sorted unique scores followed by +inf, so rates run from
    (miss 0, fa 1) to (miss 1, fa 0).
    """
    tar = np.sort(np.asarray(target_scores, dtype=float))
    non = np.sort(np.asarray(nontarget_scores, dtype=float))
    thresholds = np.append(np.unique(np.concatenate([tar, non])), np.inf)
    p_miss = np.searchsorted(tar, thresholds, side="left") / tar.size
    p_fa = 1.0 - np.searchsorted(non, thresholds, side="left") / non.size
    return thresholds, p_miss, p_fa


def _lower_hull(x, y):
    # monotone chain on points sorted by x ascending; returns vertex indices
    hull: list = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def eer_from_scores(target_scores, nontarget_scores):
    """Return ``(eer, threshold)`` for the given target/nontarget scores.

    The EER is read off the convex hull of the (false alarm, miss) operating
    points, interpolating linearly along the hull segment that crosses
    miss == false alarm.
    """
    if len(target_scores) == 0 or len(nontarget_scores) == 0:
        raise ValueError("need at least one target and one nontarget score")
    thresholds, p_miss, p_fa = operating_points(target_scores, nontarget_scores)
    # ascending false-alarm rate == descending threshold
    order = np.arange(len(thresholds))[::-1]
    fa, miss, thr = p_fa[order], p_miss[order], thresholds[order]
    hull = _lower_hull(fa, miss)
    diff = miss[hull] - fa[hull]
    for a, b in zip(hull[:-1], hull[1:]):
        da, db = miss[a] - fa[a], miss[b] - fa[b]
        if da >= 0 >= db:
            if da == db:
                return float(fa[a]), float(_finite(thr[a], thresholds))
            lam = da / (da - db)
            eer = fa[a] + lam * (fa[b] - fa[a])
            pick = thr[a] if lam < 0.5 else thr[b]
            return float(eer), float(_finite(pick, thresholds))
    raise AssertionError(f"hull never crosses the diagonal: {diff}")


def _finite(threshold, thresholds):
    if np.isfinite(threshold):
        return threshold
    return np.nextafter(thresholds[-2], np.inf)


def compute_eer(scores: ScoreSet, config: dict | None = None) -> EvalReport:
    labels = scores.labels()
    n_tar = int(labels.sum())
    n_non = int((~labels).sum())
    if n_tar == 0 or n_non == 0:
        raise ValueError("EER needs both target and nontarget trials")
    eer, thr = eer_from_scores(scores.scores[labels], scores.scores[~labels])
    return EvalReport(eer, thr, n_tar, n_non, dict(config or {}))
