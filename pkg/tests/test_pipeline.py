import numpy as np
import pytest

from audiocaptcha import pipeline as pl
from audiocaptcha.audio_io import AudioClip, zero_mean
from audiocaptcha.rasta_plp import DEFAULT_CONFIG, FeatureConfig, features_for_segments
from audiocaptcha.segmenter import extract_segment
from audiocaptcha.audio_io import read_wav
from audiocaptcha.synth import CaptchaSpec, NoiseProfile, synth_captcha


def test_noise_starts_fill_long_gaps():
    # five digits separated by 3 s gaps in a 0.3 s lead / 0.3 s tail clip
    onsets = [0.3 + i * 3.4 for i in range(5)]
    duration = onsets[-1] + 0.4 + 0.3
    starts = pl.noise_starts(duration, onsets)
    assert len(starts) >= 10
    for s in starts:
        assert 0 <= s <= duration - 0.4 + 1e-9
        for o in onsets:
            # window start at least 0.2 s from every digit interval
            assert s <= o - 0.2 + 1e-9 or s >= o + 0.4 + 0.2 - 1e-9
    assert np.all(np.diff(starts) > 0)


def test_noise_starts_tight_gaps_give_nothing():
    assert pl.noise_starts(2.0, [0.1, 0.7, 1.3]) == []


def test_table_rows_match_recomputed_features(small_corpus, small_table):
    root = small_corpus["root"]
    counts = small_table.class_counts()
    assert sum(counts.values()) == len(small_table)
    n_digits = sum(len(e["digits"]) for e in small_corpus["entries"] if e["split"] == "train")
    assert sum(v for c, v in counts.items() if c != pl.NOISE) == n_digits
    assert counts[pl.NOISE] > 0
    for i in (0, 7, len(small_table) - 1):
        path, start = small_table.provenance[i]
        clip = zero_mean(read_wav(f"{root}/{path}"))
        seg = extract_segment(clip, start, 0.4)
        feat = features_for_segments([seg], DEFAULT_CONFIG).reshape(-1)
        np.testing.assert_array_equal(feat, small_table.features[i])


def test_empty_split_is_an_error(small_corpus):
    with pytest.raises(pl.PipelineError):
        pl.build_training_table(small_corpus, split="validation")
    with pytest.raises(pl.PipelineError):
        pl.build_training_table({"entries": []})


def test_stratified_folds_partition():
    labels = np.repeat(np.arange(4), [9, 10, 11, 12])
    fold_of = pl.stratified_folds(labels, 4, seed=3)
    sizes = np.bincount(fold_of, minlength=4)
    assert sizes.sum() == labels.size and sizes.max() - sizes.min() <= 1
    for c in range(4):
        per = np.bincount(fold_of[labels == c], minlength=4)
        assert per.max() - per.min() <= 1
    np.testing.assert_array_equal(fold_of, pl.stratified_folds(labels, 4, seed=3))
    with pytest.raises(pl.StratificationError):
        pl.stratified_folds([0, 0, 0, 1, 1], 4, 0)


def test_grid_config_validation():
    with pytest.raises(pl.PipelineError):
        pl.GridConfig(folds=1)
    with pytest.raises(pl.PipelineError):
        pl.GridConfig(penalties=())


def test_single_cell_grid_is_deterministic(small_table):
    grid = pl.GridConfig((10.0,), (0.9,), folds=2)
    a = pl.cross_validate(small_table, grid, seed=5)
    b = pl.cross_validate(small_table, grid, seed=5)
    assert a.cells() == 1 and (a.best_penalty, a.best_var_fraction) == (10.0, 0.9)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "PCAVar,10"
    assert 0.8 < a.best_accuracy <= 1.0


def test_grid_best_cell_beats_corner(small_table):
    grid = pl.GridConfig((1.0, 10.0), (0.25, 0.9), folds=2)
    rep = pl.cross_validate(small_table, grid, seed=0)
    assert rep.accuracy.shape == (2, 2)
    assert rep.best_accuracy == rep.accuracy.max()
    assert rep.best_accuracy >= rep.accuracy[0, 0]


@pytest.mark.parametrize("kind,dim", [("proposed_svm", None), ("default_svm", 546), ("naive_bayes", 546)])
def test_train_final_kinds(small_table, kind, dim):
    model = pl.train_final(small_table, kind, 10.0, 0.9)
    assert model.kind == kind
    if dim is None:
        assert model.pca is not None and model.input_dim == model.pca.n_components < 546
    else:
        assert model.pca is None and model.input_dim == dim
    pred = model.classify(small_table.features[:20])
    assert pred.shape == (20,) and set(pred.tolist()) <= set(pl.LABELS)
    acc = pl.per_class_accuracy(model, small_table)
    assert set(acc) <= {pl.label_name(c) for c in pl.LABELS}


def test_train_final_rejects_bad_kind(small_table):
    with pytest.raises(pl.PipelineError):
        pl.train_final(small_table, "forest")
    with pytest.raises(pl.PipelineError):
        pl.train_final(small_table, "proposed_svm", 10.0, None)


def test_solver_model_checks_dimensions(small_model):
    with pytest.raises(pl.PipelineError):
        pl.SolverModel("proposed_svm", small_model.classifier, None)
    with pytest.raises(pl.PipelineError):
        pl.SolverModel("mystery", small_model.classifier, small_model.pca)


def test_silence_gives_empty_output(small_model):
    assert pl.solve(small_model, AudioClip(np.zeros(16000), 8000)) == []
    assert pl.solve(small_model, AudioClip(np.zeros(50), 8000)) == []


def test_solve_noiseless_captcha(small_model):
    clip, digits, _ = synth_captcha(CaptchaSpec((0, 4, 6, 4, 8), noise=NoiseProfile.silent(), seed=3))
    trace = pl.solve_trace(small_model, clip)
    assert trace.digits == [0, 4, 6, 4, 8]
    assert len(trace.labels) == len(trace.candidates) >= 5


def test_solve_refuses_mismatches(small_model):
    other = FeatureConfig(compression_exp=0.5)
    with pytest.raises(pl.ConfigMismatchError):
        pl.solve(small_model, AudioClip(np.zeros(8000), 8000), other)
    with pytest.raises(pl.SampleRateError):
        pl.solve(small_model, AudioClip(np.zeros(16000), 16000))


def test_merge_detections():
    N = pl.NOISE
    assert pl.merge_detections([0.0, 0.1, 0.5], [3, 3, 3]) == [3, 3]
    assert pl.merge_detections([0.0, 0.3], [3, 3]) == [3, 3]
    assert pl.merge_detections([0.0, 0.1, 0.15], [3, N, 4]) == [3, 4]
    assert pl.merge_detections([0.0, 0.05, 0.1, 0.15], [2, 2, 2, 2]) == [2]
    assert pl.merge_detections([], []) == []


def test_evaluate_with_stub_solvers(small_corpus):
    perfect = pl.evaluate(None, small_corpus, solver=lambda m, clip: None or _truth_lookup(small_corpus, clip))
    assert perfect.digit_accuracy == 1.0 and perfect.captcha_accuracy == 1.0
    empty = pl.evaluate(None, small_corpus, solver=lambda m, clip: [])
    assert empty.digit_accuracy == 0.0 and empty.captcha_accuracy == 0.0
    assert len(empty.per_file) == 6
    with pytest.raises(pl.PipelineError):
        pl.evaluate(None, small_corpus, split="dev")


def _truth_lookup(manifest, clip):
    # clips are distinct, so the sample count identifies the file
    for e in manifest["entries"]:
        if e["split"] == "test":
            c = read_wav(f"{manifest['root']}/{e['path']}")
            if len(c) == len(clip) and np.array_equal(c.samples, clip.samples):
                return e["digits"]
    raise AssertionError("clip not in manifest")


def test_table_counts_for_one_file(tmp_path):
    from audiocaptcha.audio_io import write_wav

    clip, digits, onsets = synth_captcha(CaptchaSpec((1, 2, 3, 4, 5), gap_range_s=(3.0, 3.0), seed=2))
    write_wav(clip, tmp_path / "a.wav")
    manifest = {"root": str(tmp_path),
                "entries": [{"path": "a.wav", "digits": digits, "onsets_s": onsets, "split": "train"}]}
    table = pl.build_training_table(manifest)
    counts = table.class_counts()
    assert [counts[d] for d in range(1, 6)] == [1] * 5
    assert counts[pl.NOISE] >= 10
    assert table.features.shape[1] == 546
