"""End-to-end evaluation: LDA, PLDA training, alpha selection, LN, scoring, EER.

A run is described by a :class:`PipelineConfig`. The prior weight alpha is
picked on the dev trials only (by PLDA/MAP EER) and then frozen for the eval
trials, whose labels are never seen before scoring.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FLOAT_FMT, LabeledDataset, read_dataset, read_vector_map
from .errors import PldaError
from .lda import fit_lda
from .lnorm import LnConfig, normalize_latent
from .metrics import EvalReport, compute_eer
from .plda import PldaModel, TrainConfig, train_ml
from .scoring import TrialSet, read_trialset, score_trialset, write_scores
from .shrinkage import EpsilonEstimate, map_epsilon

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = (0.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 7000.0)
SCORING_VARIANTS = ("plda", "plda-map")
LNORM_VARIANTS = ("none", "ln", "ln-map")


class PipelineError(PldaError):
    """A pipeline stage failed; the message starts with the stage name."""

    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"[{stage}] {exc}")


def sweep_alpha(trials: TrialSet, vectors: dict, model: PldaModel, alpha_grid, eps0=1.0, eps_ml=None):
    """EER of PLDA/MAP scoring on labeled dev trials for every alpha in the grid.

    Returns ``(best_alpha, curve)`` where ``curve`` is a list of
    ``(alpha, eer)`` in grid order. Ties go to the smaller alpha.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("alpha grid is empty")
    if 0.0 not in grid:
        raise ValueError("alpha grid must contain 0")
    eps_ml = eps_ml or EpsilonEstimate.from_model(model)
    curve = []
    for alpha in grid:
        eps = map_epsilon(eps_ml, alpha, eps0)
        curve.append((alpha, compute_eer(score_trialset(model, eps, trials, vectors, vectors)).eer))
    best = min(curve, key=lambda c: (c[1], c[0]))[0]
    return best, curve


@dataclass
class PipelineConfig:
    train_vectors: str
    eval_vectors: str
    eval_enroll: str
    eval_trials: str
    dev_vectors: str | None = None
    dev_enroll: str | None = None
    dev_trials: str | None = None
    out_dir: str = "."
    lda_dim: int | None = None
    scoring: str = "plda"
    lnorm: str = "none"
    alpha: float | None = None
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    eps0: float = 1.0
    retrain_after_ln: bool = False
    max_iters: int = TrainConfig.max_iters
    tol: float = TrainConfig.tol

    def __post_init__(self):
        if self.scoring not in SCORING_VARIANTS:
            raise ValueError(f"scoring must be one of {SCORING_VARIANTS}, got {self.scoring!r}")
        if self.lnorm not in LNORM_VARIANTS:
            raise ValueError(f"lnorm must be one of {LNORM_VARIANTS}, got {self.lnorm!r}")
        self.alpha_grid = tuple(float(a) for a in self.alpha_grid)

    @property
    def needs_alpha(self) -> bool:
        return self.scoring == "plda-map" or self.lnorm == "ln-map"

    @property
    def variant(self) -> str:
        name = "PLDA/MAP" if self.scoring == "plda-map" else "PLDA"
        if self.lnorm != "none":
            name += " + " + ("LN/MAP" if self.lnorm == "ln-map" else "LN")
        return name


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except (PldaError, ValueError, LookupError, OSError, np.linalg.LinAlgError) as exc:
                raise PipelineError(name, exc) from exc
        return run
    return wrap


@dataclass
class _Split:
    vectors: dict
    trials: TrialSet

    def map(self, fn) -> _Split:
        ids = list(self.vectors)
        out = fn(np.array([self.vectors[u] for u in ids]))
        return _Split(dict(zip(ids, out)), self.trials)


@dataclass
class PipelineResult:
    report: EvalReport
    scores: object
    alpha: float | None
    curve: list = field(default_factory=list)
    model: PldaModel | None = None


@_stage("load")
def _load(cfg: PipelineConfig):
    train = read_dataset(cfg.train_vectors)
    ev = _Split(read_vector_map(cfg.eval_vectors), read_trialset(cfg.eval_enroll, cfg.eval_trials))
    dev = None
    if cfg.dev_vectors:
        dev = _Split(read_vector_map(cfg.dev_vectors), read_trialset(cfg.dev_enroll, cfg.dev_trials))
    return train, dev, ev


@_stage("lda")
def _lda(cfg, train: LabeledDataset, splits):
    lda = fit_lda(train, cfg.lda_dim or train.dim)
    return train.transform(lda.apply), [s.map(lda.apply) if s else None for s in splits]


@_stage("train")
def _train(cfg, train: LabeledDataset) -> PldaModel:
    return train_ml(train, TrainConfig(max_iters=cfg.max_iters, tol=cfg.tol))


@_stage("select-alpha")
def _select_alpha(cfg, model, dev):
    if cfg.alpha is not None:
        return float(cfg.alpha), []
    if dev is None:
        raise ValueError("alpha not given and no dev set to select it on")
    return sweep_alpha(dev.trials, dev.vectors, model, cfg.alpha_grid, cfg.eps0)


@_stage("lnorm")
def _lnorm(cfg, model, eps_ln, train, ev):
    ln = LnConfig(eps_ln)

    def to_ln(x):
        return normalize_latent(ln, model.to_latent(x))

    ev = ev.map(to_ln)
    if cfg.retrain_after_ln:
        scorer = train_ml(train.transform(to_ln), TrainConfig(max_iters=cfg.max_iters, tol=cfg.tol))
    else:
        scorer = PldaModel.identity(model.epsilon, model.class_counts)
    return scorer, ev


@_stage("score")
def _score(model, eps, ev: _Split):
    return score_trialset(model, eps, ev.trials.without_labels(), ev.vectors, ev.vectors)


def run_pipeline_result(cfg: PipelineConfig, write: bool = True) -> PipelineResult:
    train, dev, ev = _load(cfg)
    train, (dev, ev) = _lda(cfg, train, [dev, ev])
    model = _train(cfg, train)
    eps_ml = EpsilonEstimate.from_model(model)

    alpha, curve = None, []
    if cfg.needs_alpha:
        alpha, curve = _select_alpha(cfg, model, dev)
        logger.info("alpha = %g", alpha)
    eps_map = map_epsilon(eps_ml, alpha, cfg.eps0) if alpha is not None else None

    scorer = model
    if cfg.lnorm != "none":
        scorer, ev = _lnorm(cfg, model, eps_map if cfg.lnorm == "ln-map" else eps_ml, train, ev)
    eps_score = EpsilonEstimate.from_model(scorer)
    if cfg.scoring == "plda-map":
        eps_score = map_epsilon(eps_score, alpha, cfg.eps0)

    scores = _score(scorer, eps_score, ev)
    try:
        labeled = scores.with_labels(ev.trials)
        report = compute_eer(labeled, _echo(cfg, alpha, model))
    except (PldaError, ValueError, LookupError) as exc:
        raise PipelineError("eer", exc) from exc

    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_scores(out / "scores.txt", scores)
        report.save(out / "report.txt")
        if curve:
            with open(out / "alpha_curve.tsv", "w") as fh:
                fh.write("alpha\teer\n")
                fh.writelines(f"{FLOAT_FMT.format(a)}\t{FLOAT_FMT.format(e)}\n" for a, e in curve)
    return PipelineResult(report, scores, alpha, curve, model)


def run_pipeline(cfg: PipelineConfig, write: bool = True) -> EvalReport:
    """Run one system configuration; writes ``scores.txt`` and ``report.txt`` to ``out_dir``."""
    return run_pipeline_result(cfg, write).report


def _echo(cfg: PipelineConfig, alpha, model) -> dict:
    return {
        "variant": cfg.variant.replace(" ", ""),
        "scoring": cfg.scoring,
        "lnorm": cfg.lnorm,
        "lda_dim": model.p,
        "alpha": "-" if alpha is None else FLOAT_FMT.format(alpha),
        "eps0": FLOAT_FMT.format(cfg.eps0),
        "retrain_after_ln": int(cfg.retrain_after_ln),
        "train_classes": model.K,
    }


def run_variant_matrix(cfg: PipelineConfig, lda_dims, write: bool = True) -> dict:
    """All {PLDA, PLDA/MAP} x {none, LN, LN/MAP} systems for each LDA dimension.

    Results go to ``<out_dir>/lda<dim>_<scoring>_<lnorm>/``. Alpha is selected
    once per LDA dimension and shared by the six systems, as the MAP prior
    is chosen by PLDA/MAP and reused for LN/MAP.
    """
    reports = {}
    for dim in lda_dims:
        shared_alpha = cfg.alpha
        if shared_alpha is None:
            probe = dataclasses.replace(
                cfg, lda_dim=dim, scoring="plda-map", lnorm="none",
                out_dir=str(Path(cfg.out_dir) / f"lda{dim}_select"),
            )
            shared_alpha = run_pipeline_result(probe, write=write).alpha
        for scoring in SCORING_VARIANTS:
            for lnorm in LNORM_VARIANTS:
                name = f"lda{dim}_{scoring}_{lnorm}"
                sub = dataclasses.replace(
                    cfg, lda_dim=dim, scoring=scoring, lnorm=lnorm, alpha=shared_alpha,
                    out_dir=str(Path(cfg.out_dir) / name),
                )
                reports[name] = run_pipeline(sub, write=write)
    return reports


CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_grid(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(a) for a in text)
    return tuple(float(a) for a in str(text).replace(",", " ").split())


def read_config(path) -> dict:
    """Flat ``key = value`` (or ``key value``) text; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                key, _, value = line.partition(" ")
            key = key.strip().replace("-", "_")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


PATH_KEYS = (
    "train_vectors", "eval_vectors", "eval_enroll", "eval_trials",
    "dev_vectors", "dev_enroll", "dev_trials", "out_dir",
)


def config_from_mapping(values: dict, base_dir=None) -> PipelineConfig:
    """Build a config from string values, rejecting unknown keys.

    Relative paths are resolved against ``base_dir`` when given.
    """
    unknown = set(values) - set(CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, raw in values.items():
        if raw is None:
            continue
        if key in PATH_KEYS:
            path = Path(raw)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            kwargs[key] = str(path)
        elif key in ("lda_dim", "max_iters"):
            kwargs[key] = None if str(raw).lower() in ("none", "full", "") else int(raw)
        elif key in ("alpha",):
            kwargs[key] = None if str(raw).lower() in ("none", "auto", "") else float(raw)
        elif key in ("eps0", "tol"):
            kwargs[key] = float(raw)
        elif key == "alpha_grid":
            kwargs[key] = parse_grid(raw)
        elif key == "retrain_after_ln":
            kwargs[key] = parse_bool(raw)
        else:
            kwargs[key] = raw
    missing = [k for k in ("train_vectors", "eval_vectors", "eval_enroll", "eval_trials") if k not in kwargs]
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return config_from_mapping(read_config(path), base_dir=path.parent)
