import dataclasses
import warnings

import numpy as np
import pytest

from plda_map import synth
from plda_map.errors import ConvergenceWarning
from plda_map.harness import (
    PipelineConfig,
    PipelineError,
    config_from_mapping,
    load_config,
    run_pipeline,
    run_pipeline_result,
    run_variant_matrix,
    sweep_alpha,
)
from plda_map.plda import train_ml
from plda_map.scoring import Trial, TrialSet
from plda_map.shrinkage import EpsilonEstimate, Provenance


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    corpus = synth.make_corpus(11, classes=40, per_class=6, dim=8, eval_classes=30, eval_per_class=3)
    return corpus, synth.write_corpus(corpus, out), out


def base_cfg(paths, out, **kw):
    kw.setdefault("alpha_grid", (0, 5, 20, 80))
    return PipelineConfig(**paths, out_dir=str(out), **kw)


@pytest.fixture(scope="module")
def dev_model(corpus_dir):
    corpus, _, _ = corpus_dir
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return train_ml(corpus.train)


def test_sweep_single_point_is_baseline(corpus_dir, dev_model):
    corpus, _, _ = corpus_dir
    dev = corpus.dev
    best, curve = sweep_alpha(dev.trials, dev.vectors, dev_model, [0])
    assert best == 0 and len(curve) == 1
    ref = run_eer(dev, dev_model)
    assert curve[0][1] == ref


def run_eer(part, model):
    from plda_map.metrics import compute_eer
    from plda_map.scoring import score_trialset

    return compute_eer(score_trialset(model, None, part.trials, part.vectors, part.vectors)).eer


def test_sweep_flat_when_ml_equals_prior(corpus_dir, dev_model):
    corpus, _, _ = corpus_dir
    eps0 = dev_model.epsilon.copy()
    best, curve = sweep_alpha(corpus.dev.trials, corpus.dev.vectors, dev_model, [0, 10, 1000, 1e6], eps0=eps0)
    eers = [e for _, e in curve]
    assert max(eers) - min(eers) <= 1e-12
    assert best == 0


def test_sweep_grid_validation(corpus_dir, dev_model):
    corpus, _, _ = corpus_dir
    with pytest.raises(ValueError):
        sweep_alpha(corpus.dev.trials, corpus.dev.vectors, dev_model, [5, 10])
    with pytest.raises(ValueError):
        sweep_alpha(corpus.dev.trials, corpus.dev.vectors, dev_model, [])


def test_sweep_uses_given_ml_estimate(corpus_dir, dev_model):
    corpus, _, _ = corpus_dir
    est = EpsilonEstimate(dev_model.epsilon * 2, Provenance.VIRTUAL_SAMPLE, dev_model.K)
    _, a = sweep_alpha(corpus.dev.trials, corpus.dev.vectors, dev_model, [0], eps_ml=est)
    _, b = sweep_alpha(corpus.dev.trials, corpus.dev.vectors, dev_model, [0])
    assert a != b


def test_plda_map_at_zero_alpha_equals_plda(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    a = run_pipeline_result(base_cfg(paths, tmp_path / "a", scoring="plda"))
    b = run_pipeline_result(base_cfg(paths, tmp_path / "b", scoring="plda-map", alpha=0))
    assert np.array_equal(a.scores.scores, b.scores.scores)
    assert a.report.eer == b.report.eer
    assert (tmp_path / "a" / "scores.txt").read_bytes() == (tmp_path / "b" / "scores.txt").read_bytes()


def test_pipeline_outputs_and_determinism(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    cfg = base_cfg(paths, tmp_path / "r1", scoring="plda-map", lnorm="ln-map", lda_dim=6)
    rep = run_pipeline(cfg)
    assert 0 <= rep.eer < 0.5
    assert rep.config["lda_dim"] == 6 and rep.config["variant"] == "PLDA/MAP+LN/MAP"
    for name in ("scores.txt", "report.txt", "alpha_curve.tsv"):
        assert (tmp_path / "r1" / name).exists()
    run_pipeline(dataclasses.replace(cfg, out_dir=str(tmp_path / "r2")))
    for name in ("scores.txt", "report.txt", "alpha_curve.tsv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_retrain_after_ln_runs(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        rep = run_pipeline(base_cfg(paths, tmp_path, lnorm="ln", retrain_after_ln=True))
    assert rep.config["retrain_after_ln"] == 1
    assert 0 <= rep.eer < 0.5


def test_missing_id_names_stage_and_id(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    bad = tmp_path / "bad.trials"
    text = open(paths["eval_trials"]).read()
    bad.write_text(text + "evals0000 ghost-utt target\n")
    cfg = base_cfg({**paths, "eval_trials": str(bad)}, tmp_path / "out")
    with pytest.raises(PipelineError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "score"
    assert "ghost-utt" in str(info.value)


def test_missing_dev_for_alpha(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    no_dev = {k: v for k, v in paths.items() if not k.startswith("dev")}
    with pytest.raises(PipelineError, match=r"\[select-alpha\]"):
        run_pipeline(base_cfg(no_dev, tmp_path, scoring="plda-map"))


def test_bad_file_reports_load_stage(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    with pytest.raises(PipelineError, match=r"^\[load\]"):
        run_pipeline(base_cfg({**paths, "train_vectors": str(tmp_path / "nope")}, tmp_path))


def test_variant_matrix(corpus_dir, tmp_path):
    _, paths, _ = corpus_dir
    cfg = base_cfg(paths, tmp_path / "m1")
    reports = run_variant_matrix(cfg, [8, 5])
    assert len(reports) == 12
    for dim in (8, 5):
        uses_alpha = ["plda_ln-map", "plda-map_none", "plda-map_ln", "plda-map_ln-map"]
        alphas = {reports[f"lda{dim}_{v}"].config["alpha"] for v in uses_alpha}
        assert len(alphas) == 1 and "-" not in alphas
        assert reports[f"lda{dim}_plda_none"].config["alpha"] == "-"
    again = run_variant_matrix(dataclasses.replace(cfg, out_dir=str(tmp_path / "m2")), [8, 5])
    assert {k: r.to_text() for k, r in reports.items()} == {k: r.to_text() for k, r in again.items()}


def test_config_parsing(tmp_path, corpus_dir):
    _, paths, out = corpus_dir
    cfg_file = out / "test.cfg"
    cfg_file.write_text(
        "# comment\ntrain_vectors = train.vec\neval_vectors eval.vec\n"
        "eval_enroll = eval.enroll\neval_trials = eval.trials\n"
        "lnorm = ln\nalpha_grid = 0, 1, 2\nretrain_after_ln = yes\nlda_dim = 4\n"
    )
    cfg = load_config(cfg_file)
    assert cfg.train_vectors == paths["train_vectors"]
    assert cfg.alpha_grid == (0.0, 1.0, 2.0)
    assert cfg.retrain_after_ln is True and cfg.lda_dim == 4 and cfg.lnorm == "ln"
    with pytest.raises(ValueError, match="bogus"):
        config_from_mapping({"bogus": "1"})
    with pytest.raises(ValueError):
        PipelineConfig("a", "b", "c", "d", scoring="svm")


@pytest.mark.slow
def test_small_k_variant_ordering(tmp_path):
    """MAP shrinkage helps at K=60, p=50, with and without length normalisation."""
    map_wins = ln_map_wins = 0
    seeds = range(6)
    for seed in seeds:
        paths = synth.write_corpus(synth.make_corpus(100 + seed), tmp_path / str(seed))
        cfg = PipelineConfig(**paths, out_dir=str(tmp_path / f"r{seed}"), alpha_grid=synth.SMALL_K_ALPHA_GRID)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            rep = run_variant_matrix(cfg, [50], write=False)
        eer = {k.split("_", 1)[1]: r.eer for k, r in rep.items()}
        map_wins += eer["plda-map_none"] < eer["plda_none"]
        ln_map_wins += eer["plda_ln-map"] <= eer["plda_ln"]
    assert map_wins >= 5
    assert ln_map_wins >= 4
