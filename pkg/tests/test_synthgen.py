import numpy as np
import pytest

from volclass import synthgen as sg
from volclass.decision import REST, DecisionPolicy
from volclass.errors import DataError, IoFailure
from volclass.histogram import compute_histogram, downscale


def test_zero_jitter_gives_identical_volumes():
    vols = sg.generate(sg.FamilySpec("blob", (16, 16, 16), jitter=0.0), 3)
    assert all(np.array_equal(vols[0].voxels, v.voxels) for v in vols)


def test_generation_is_deterministic():
    spec = sg.FamilySpec("shell", (16, 16, 16), seed=4)
    a, b = sg.generate(spec, 2, start=5), sg.generate(spec, 2, start=5)
    assert all(np.array_equal(x.voxels, y.voxels) for x, y in zip(a, b))
    assert not np.array_equal(a[0].voxels, a[1].voxels)


def test_instance_is_independent_of_batch():
    spec = sg.FamilySpec("ramp", (16, 16, 16))
    assert np.array_equal(sg.generate(spec, 3)[2].voxels, sg.generate(spec, 1, start=2)[0].voxels)


@pytest.mark.parametrize("kwargs", [{"family": "cube"}, {"family": "blob", "dims": (4, 16, 16)}, {"family": "blob", "jitter": 2}])
def test_bad_family_spec(kwargs):
    with pytest.raises(ValueError):
        sg.FamilySpec(**kwargs)


def test_blob_and_shell_histograms_differ():
    blob, shell = (downscale(compute_histogram(sg.generate(sg.FamilySpec(f), 1)[0]), 3) for f in ("blob", "shell"))
    diff = np.abs(blob.values - shell.values) > 0.1
    assert diff.mean() >= 0.10


def test_corpus_labels_and_names():
    corpus = sg.make_corpus({"blob": 2, "noise": 1}, dims=(16, 16, 16))
    assert [c.name for c in corpus] == ["blob_000", "blob_001", "noise_000"]
    assert [c.label for c in corpus] == ["blob", "blob", REST]


@pytest.fixture(scope="module")
def trained():
    train = sg.make_corpus({"blob": 1, "shell": 1, "ramp": 1, "noise": 1}, dims=(32, 32, 32))
    state, report = sg.build_model(train, reduction_factor=3)
    return state, report, train


def test_build_model_converges(trained):
    state, report, _ = trained
    assert report.converged
    assert state.classes == ["blob", "shell", "ramp", "rest"]
    assert state.registry.rest_name == "rest"


def test_training_set_is_recalled(trained):
    state, _, train = trained
    rep = sg.evaluate(state, train)
    assert rep.some_to_rest == rep.rest_to_some == rep.some_to_other_some == 0
    assert np.array_equal(np.diag(rep.matrix), [1, 1, 1, 1])


def test_matrix_rows_match_composition(trained):
    state = trained[0]
    test = sg.make_corpus({"blob": 2, "shell": 3, "ramp": 1, "checker": 2}, dims=(32, 32, 32), start=50)
    rep = sg.evaluate(state, test, DecisionPolicy(threshold=0.7))
    assert rep.labels == ["blob", "shell", "ramp", REST]
    assert list(rep.matrix.sum(axis=1)) == [2, 3, 1, 2]
    assert rep.total == len(test) == len(rep.results)
    off = rep.matrix.sum() - np.trace(rep.matrix)
    assert off == rep.some_to_rest + rep.rest_to_some + rep.some_to_other_some


def test_evaluate_is_deterministic(trained):
    state = trained[0]
    test = sg.make_corpus({"blob": 2, "noise": 2}, dims=(32, 32, 32), start=20)
    rows = [(p, sg.evaluate(state, test, p)) for p in sg.policy_grid()]
    again = [(p, sg.evaluate(state, test, p)) for p in sg.policy_grid()]
    assert sg.grid_csv(rows) == sg.grid_csv(again)
    assert "some->rest" in sg.grid_table(rows)
    assert rows[0][1].table().startswith("true")


def test_rest_items_without_rest_output_count_as_nan():
    train = sg.make_corpus({"blob": 1, "ramp": 1}, dims=(16, 16, 16))
    state, _ = sg.build_model(train, reduction_factor=4)
    rep = sg.evaluate(state, sg.make_corpus({"noise": 1, "blob": 1}, dims=(16, 16, 16), start=3))
    assert np.isnan(rep.correct_outputs[0]) and not np.isnan(rep.correct_outputs[1])
    assert rep.mean_correct_output == pytest.approx(rep.correct_outputs[1])


def test_evaluate_errors(trained):
    with pytest.raises(DataError):
        sg.evaluate(trained[0], [])
    odd = sg.make_corpus({"blob": 1}, dims=(16, 16, 16))
    odd[0].label = "unicorn"
    with pytest.raises(DataError):
        sg.evaluate(trained[0], odd)


def test_corpus_round_trip(tmp_path):
    corpus = sg.make_corpus({"blob": 1, "checker": 1}, dims=(16, 16, 16))
    sg.write_corpus(corpus, tmp_path / "c")
    back = sg.read_corpus(tmp_path / "c")
    assert [(c.name, c.label) for c in back] == [(c.name, c.label) for c in corpus]
    assert back[0].volume.meta.voxel_type == "u16"
    assert back[0].volume.voxels.max() == 65535
    # rescaling is affine; quantization only moves voxels sitting on bin edges
    a, b = corpus[0].features(3), back[0].features(3)
    assert np.abs(a - b).mean() < 0.005


def test_read_corpus_missing(tmp_path):
    with pytest.raises(IoFailure):
        sg.read_corpus(tmp_path)
