"""Command-line entry point: ``plda-map <subcommand> [flags]``.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are the subcommand's long flags (dashes or underscores). Flags given on
the command line override the file. Exit status is 0 on success, 2 on usage
errors and 1 on data errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, sim, synth
from .data import read_dataset, read_vectors, write_vectors
from .errors import PldaError
from .lda import fit_lda, load_lda, save_lda
from .lnorm import LnConfig, normalize_latent
from .metrics import compute_eer
from .plda import PldaModel, TrainConfig, load_model, save_model, train_ml
from .scoring import read_scores, read_trials, read_trialset, score_trialset, write_scores
from .shrinkage import (
    EpsilonEstimate,
    load_epsilon,
    map_epsilon,
    save_epsilon,
    virtual_sample_epsilon,
)

logger = logging.getLogger("plda_map")

PROG = "plda-map"
PATH_DESTS: set = set()


def _path(sub, flag, help):
    action = sub.add_argument(flag, metavar="PATH", help=help)
    PATH_DESTS.add(action.dest)
    return action


def _grid(text):
    return harness.parse_grid(text)


def _int_list(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _eps0(text):
    """A scalar, or a file with one value per line."""
    try:
        return float(text)
    except ValueError:
        return np.loadtxt(text, ndmin=1)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog=PROG, description="Two-covariance PLDA with MAP between-class variance shrinkage."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs.required = True
    table = {}

    def add(name, help):
        sub = subs.add_parser(name, help=help, description=help)
        sub.add_argument("--config", metavar="PATH", help="flat key = value file supplying flag defaults")
        table[name] = sub
        return sub

    sub = add("train", "train ML two-covariance PLDA on a labeled vector file")
    _path(sub, "--vectors", "labeled vector file")
    _path(sub, "--out", "output model file")
    _path(sub, "--eps-out", "also write the ML epsilon file here")
    sub.add_argument("--max-iters", type=int, default=TrainConfig.max_iters)
    sub.add_argument("--tol", type=float, default=TrainConfig.tol)

    sub = add("lda-fit", "fit an LDA projection on a labeled vector file")
    _path(sub, "--vectors", "labeled vector file")
    sub.add_argument("--dim", type=int, help="output dimension (default: input dimension)")
    _path(sub, "--out", "output LDA file")

    sub = add("lda-apply", "project a vector file with a fitted LDA")
    _path(sub, "--lda", "LDA file")
    _path(sub, "--vectors", "vector file")
    sub.add_argument("--labeled", action="store_true", help="input has a class-id column")
    _path(sub, "--out", "output vector file")

    sub = add("shrink", "MAP-interpolate between-class variances toward a prior")
    _path(sub, "--model", "model file (uses its ML epsilon)")
    _path(sub, "--eps", "epsilon file (instead of --model)")
    _path(sub, "--vectors", "labeled training vectors for --virtual")
    sub.add_argument("--virtual", action="store_true", help="start from the virtual-sample estimate")
    sub.add_argument("--alpha", type=float, help="prior weight in virtual samples")
    sub.add_argument("--eps0", type=_eps0, default=1.0, help="prior variance: scalar or file")
    _path(sub, "--out", "output epsilon file")

    sub = add("score", "score a trial list")
    _path(sub, "--model", "model file")
    _path(sub, "--eps", "epsilon file overriding the model's (e.g. MAP)")
    _path(sub, "--vectors", "unlabeled vector file with enrollment and test utterances")
    _path(sub, "--enroll", "enrollment map file")
    _path(sub, "--trials", "trial file")
    sub.add_argument("--latent", action="store_true", help="vectors are already in latent coordinates")
    _path(sub, "--out", "output score file")

    sub = add("lnorm", "length-normalise vectors in the model's latent space")
    _path(sub, "--model", "model file")
    _path(sub, "--vectors", "vector file")
    sub.add_argument("--labeled", action="store_true", help="input has a class-id column")
    sub.add_argument("--map", action="store_true", help="use the MAP epsilon (LN/MAP)")
    sub.add_argument("--alpha", type=float, help="prior weight for --map")
    sub.add_argument("--eps0", type=_eps0, default=1.0, help="prior variance for --map")
    _path(sub, "--eps", "explicit epsilon file (overrides --map)")
    _path(sub, "--out", "output vector file (latent coordinates)")

    sub = add("eer", "equal error rate of a score file")
    _path(sub, "--scores", "score file")
    _path(sub, "--trials", "labeled trial file")
    _path(sub, "--report", "optional report file")

    sub = add("sweep-alpha", "dev-set EER for each prior weight")
    _path(sub, "--model", "model file")
    _path(sub, "--vectors", "unlabeled dev vector file")
    _path(sub, "--enroll", "dev enrollment map")
    _path(sub, "--trials", "labeled dev trial file")
    sub.add_argument("--grid", type=_grid, default=harness.DEFAULT_ALPHA_GRID, help="comma-separated alphas")
    sub.add_argument("--eps0", type=_eps0, default=1.0)
    _path(sub, "--out", "optional TSV curve output")

    sub = add("pipeline", "LDA + PLDA + (MAP) + (LN) evaluation")
    for key in harness.PATH_KEYS:
        _path(sub, "--" + key.replace("_", "-"), key.replace("_", " "))
    sub.add_argument("--lda-dim", type=int)
    sub.add_argument("--scoring", choices=harness.SCORING_VARIANTS)
    sub.add_argument("--lnorm", choices=harness.LNORM_VARIANTS)
    sub.add_argument("--alpha", type=float, help="fixed alpha (default: select on dev)")
    sub.add_argument("--alpha-grid", type=_grid)
    sub.add_argument("--eps0", type=float)
    sub.add_argument("--retrain-after-ln", action="store_true", default=None)
    sub.add_argument("--max-iters", type=int)
    sub.add_argument("--tol", type=float)
    sub.add_argument("--matrix", action="store_true", help="run all 12 system variants")
    sub.add_argument("--lda-dims", type=_int_list, help="LDA dims for --matrix (default: full and lda-dim)")

    sub = add("simulate", "variance of the ML variance estimate vs sample count")
    sub.add_argument("--dist", choices=sim.DISTRIBUTIONS + ("both",), default="both")
    sub.add_argument("--n-grid", type=_int_list, default=(4, 8, 16, 32, 64, 128))
    sub.add_argument("--reps", type=int, default=10_000)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--true-variance", type=float, default=1.0)
    sub.add_argument("--known-mean", action="store_true")
    _path(sub, "--out", "output TSV (default: stdout)")

    sub = add("synth", "write a synthetic train/dev/eval corpus and pipeline config")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--classes", type=int, default=60)
    sub.add_argument("--per-class", type=int, default=10)
    sub.add_argument("--dim", type=int, default=50)
    sub.add_argument("--tail", choices=synth.TAILS, default="student")
    sub.add_argument("--eval-classes", type=int, default=100)
    sub.add_argument("--eval-per-class", type=int, default=4)
    sub.add_argument("--spread", type=float, default=synth.DEFAULT_SPREAD)
    _path(sub, "--out", "output directory")

    return parser, table


def _apply_config(parser, sub, args, argv):
    cfg_path = Path(args.config)
    values = harness.read_config(cfg_path)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        sub.error(f"unknown config keys in {cfg_path}: {', '.join(unknown)}")
    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        try:
            if action.nargs == 0:
                value = harness.parse_bool(raw)
            elif key in PATH_DESTS:
                path = Path(raw)
                value = str(path if path.is_absolute() else cfg_path.parent / path)
            else:
                value = action.type(raw) if action.type else raw
        except (ValueError, OSError) as exc:
            sub.error(f"config key {key}: {exc}")
        if action.choices is not None and value not in action.choices:
            sub.error(f"config key {key}: {value!r} not in {list(action.choices)}")
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(sub, args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        sub.error("missing required " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _cmd_train(args, sub):
    _require(sub, args, "vectors", "out")
    model = train_ml(read_dataset(args.vectors), TrainConfig(max_iters=args.max_iters, tol=args.tol))
    save_model(model, args.out)
    if args.eps_out:
        save_epsilon(EpsilonEstimate.from_model(model), args.eps_out)


def _cmd_lda_fit(args, sub):
    _require(sub, args, "vectors", "out")
    data = read_dataset(args.vectors)
    save_lda(fit_lda(data, args.dim or data.dim), args.out)


def _rewrite_vectors(path_in, path_out, labeled, fn):
    ids, labels, x = read_vectors(path_in, labeled)
    write_vectors(path_out, ids, fn(x), labels)


def _cmd_lda_apply(args, sub):
    _require(sub, args, "lda", "vectors", "out")
    _rewrite_vectors(args.vectors, args.out, args.labeled, load_lda(args.lda).apply)


def _source_eps(args, sub):
    if args.eps:
        return load_epsilon(args.eps)
    _require(sub, args, "model")
    model = load_model(args.model)
    if getattr(args, "virtual", False):
        _require(sub, args, "vectors")
        return virtual_sample_epsilon(model, read_dataset(args.vectors))
    return EpsilonEstimate.from_model(model)


def _cmd_shrink(args, sub):
    _require(sub, args, "alpha", "out")
    est = _source_eps(args, sub)
    if args.alpha == 0:
        # zero prior weight is the unmodified estimate
        save_epsilon(est, args.out)
    else:
        save_epsilon(map_epsilon(est, args.alpha, args.eps0), args.out)


def _cmd_score(args, sub):
    _require(sub, args, "model", "vectors", "enroll", "trials", "out")
    model = load_model(args.model)
    eps = load_epsilon(args.eps) if args.eps else None
    if args.latent:
        model = PldaModel.identity(model.epsilon, model.class_counts)
    ids, _, x = read_vectors(args.vectors, labeled=False)
    vectors = dict(zip(ids, x))
    trials = read_trialset(args.enroll, args.trials)
    write_scores(args.out, score_trialset(model, eps, trials.without_labels(), vectors, vectors))


def _cmd_lnorm(args, sub):
    _require(sub, args, "model", "vectors", "out")
    model = load_model(args.model)
    if args.eps:
        eps = load_epsilon(args.eps)
    elif args.map:
        _require(sub, args, "alpha")
        eps = map_epsilon(EpsilonEstimate.from_model(model), args.alpha, args.eps0)
    else:
        eps = EpsilonEstimate.from_model(model)
    cfg = LnConfig(eps)
    _rewrite_vectors(args.vectors, args.out, args.labeled, lambda x: normalize_latent(cfg, model.to_latent(x)))


def _cmd_eer(args, sub):
    _require(sub, args, "scores", "trials")
    report = compute_eer(read_scores(args.scores).with_labels(read_trials(args.trials)))
    print(f"{report.eer:.9g}")
    if args.report:
        report.save(args.report)


def _cmd_sweep_alpha(args, sub):
    _require(sub, args, "model", "vectors", "enroll", "trials")
    model = load_model(args.model)
    ids, _, x = read_vectors(args.vectors, labeled=False)
    best, curve = harness.sweep_alpha(
        read_trialset(args.enroll, args.trials), dict(zip(ids, x)), model, args.grid, args.eps0
    )
    lines = ["alpha\teer"] + [f"{a:.9g}\t{e:.9g}" for a, e in curve]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    print(f"best_alpha {best:.9g}")


def _cmd_pipeline(args, sub):
    values = {k: getattr(args, k) for k in harness.CONFIG_FIELDS if getattr(args, k, None) is not None}
    try:
        cfg = harness.config_from_mapping(values)
    except ValueError as exc:
        sub.error(str(exc))
    if args.matrix:
        dims = args.lda_dims
        if dims is None:
            full = read_dataset(cfg.train_vectors).dim
            dims = (full,) if cfg.lda_dim in (None, full) else (full, cfg.lda_dim)
        reports = harness.run_variant_matrix(cfg, dims)
        for name, rep in reports.items():
            print(f"{name}\t{rep.eer:.9g}")
    else:
        print(f"{harness.run_pipeline(cfg).eer:.9g}")


def _cmd_simulate(args, sub):
    dists = sim.DISTRIBUTIONS if args.dist == "both" else (args.dist,)
    columns = []
    for dist in dists:
        spec = sim.SimSpec(dist, args.true_variance, args.n_grid, args.reps, args.seed, args.known_mean)
        columns.append([v for _, v in sim.variance_of_variance(spec)])
    rows = [(n, *vals) for n, vals in zip(args.n_grid, zip(*columns))]
    header = ("n", "var_of_var") if len(dists) == 1 else ("n",) + dists
    if args.out:
        sim.write_tsv(args.out, rows, header)
    else:
        print("\t".join(header))
        for row in rows:
            print("\t".join([str(row[0])] + [f"{v:.9g}" for v in row[1:]]))


def _cmd_synth(args, sub):
    _require(sub, args, "out")
    corpus = synth.make_corpus(
        args.seed, args.classes, args.per_class, args.dim, args.tail,
        args.eval_classes, args.eval_per_class, args.spread,
    )
    paths = synth.write_corpus(corpus, args.out)
    out = Path(args.out)
    lines = [f"{k} = {Path(v).name}" for k, v in paths.items()]
    lines += ["out_dir = results", "scoring = plda-map", "lnorm = none",
              "alpha_grid = " + ",".join(f"{a:g}" for a in synth.SMALL_K_ALPHA_GRID)]
    (out / "pipeline.cfg").write_text("\n".join(lines) + "\n")


COMMANDS = {
    "train": _cmd_train,
    "lda-fit": _cmd_lda_fit,
    "lda-apply": _cmd_lda_apply,
    "shrink": _cmd_shrink,
    "score": _cmd_score,
    "lnorm": _cmd_lnorm,
    "eer": _cmd_eer,
    "sweep-alpha": _cmd_sweep_alpha,
    "pipeline": _cmd_pipeline,
    "simulate": _cmd_simulate,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, table = build_parser()
    try:
        args = parser.parse_args(argv)
        sub = table[args.command]
        if args.config:
            args = _apply_config(parser, sub, args, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args, sub)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (PldaError, ValueError, LookupError, OSError, np.linalg.LinAlgError) as exc:
        msg = " ".join(str(exc).split())
        print(f"{PROG} {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0
