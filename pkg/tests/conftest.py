import copy

import pytest

from spde.config import ExperimentConfig
from storage import ArtifactStore

# dx = dt = 2^-7; windows, ladders and ramps all fit with room to spare
SMALL = {
    "noise": {"H": 0.3},
    "grid": {"L": 2.0, "nx": 512, "T": 0.5, "nt": 64, "L_obs": 0.25},
    "kernels": {"kind": "heat", "init_family": "zero"},
    "solver": {"a": 0.0, "b": 1.0, "n_iters": 3, "picard_ensemble": 4},
    "regularity": {"h0": 0.25, "bootstrap_resamples": 50, "property_p_stride": 16},
    "run": {"paths": 16, "seed": 7, "workers": 1},
}


def _merge(base: dict, patch: dict) -> dict:
    merged = copy.deepcopy(base)
    for section, values in patch.items():
        merged.setdefault(section, {}).update(values)
    return merged


@pytest.fixture
def config_factory():
    """Small-grid ExperimentConfig with per-section patches, e.g. solver={"a": 0.5}."""
    def build(**patch) -> ExperimentConfig:
        return ExperimentConfig.model_validate(_merge(SMALL, patch))
    return build


@pytest.fixture
def small_config(config_factory) -> ExperimentConfig:
    return config_factory()


@pytest.fixture
def store(tmp_path) -> ArtifactStore:
    return ArtifactStore(tmp_path / "run")
