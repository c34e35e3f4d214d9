import pytest

from ergl.pipeline import Dataset, TrainConfig, synth_data, train


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """2 scenes x 6 half-second clips, 4 informative events in a vocabulary of 6."""
    root = tmp_path_factory.mktemp("tiny")
    return synth_data(root, n_scenes=2, clips_per_scene=6, n_events=4, vocab_size=6, seed=3, duration=0.5)


@pytest.fixture(scope="session")
def tiny_config(tiny_synth):
    return TrainConfig(n_events=4, u_layers=1, batch_size=4, epochs=3, profile="test", seed=1,
                       manifest=str(tiny_synth.manifest_path), labels=str(tiny_synth.labels_path))


@pytest.fixture(scope="session")
def tiny_run(tiny_synth, tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    dataset = Dataset.load(tiny_synth.manifest_path, tiny_synth.labels_path)
    return dataset, train(tiny_config, dataset, out), out
