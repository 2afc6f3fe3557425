import numpy as np
import pytest

from apbface.data import DatasetManifest, SynthConfig, synth_dataset


@pytest.fixture(scope="session")
def tiny_synth_cfg():
    return SynthConfig(n_samples=60, resolution=32, n_landmarks=20, seed=7,
                       identities=("ann_a", "ann_b"))


@pytest.fixture(scope="session")
def tiny_manifest(tiny_synth_cfg, tmp_path_factory) -> DatasetManifest:
    root = tmp_path_factory.mktemp("tiny_ds")
    return synth_dataset(tiny_synth_cfg, root)


def randomize_params(module, rng, scale=0.3):
    """Well-scaled random parameters for finite-difference checks (the 0.02
    production init collapses activations in micro nets, burying gradients
    under FD noise)."""
    for key, p in module.params().items():
        p[...] = rng.normal(0.0, scale, p.shape)
        if key.endswith("gamma"):
            p[...] = np.abs(p) + 0.5
