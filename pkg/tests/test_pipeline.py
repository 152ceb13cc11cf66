"""run_pipeline configuration handling and manifest contents."""

import json
import os

import pytest

from trajclust.cohort import save_cohort
from trajclust.errors import ConfigError
from trajclust.pipeline import RUN_FILE, RunConfig, run_pipeline
from trajclust.selection import FIXED
from trajclust.synth import generate


def config_for(tmp_path, **kw):
    return RunConfig(
        events=str(tmp_path / "events.csv"),
        patients=str(tmp_path / "patients.csv"),
        out_dir=str(tmp_path / "out"),
        **kw,
    )


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown policy"):
        config_for(tmp_path, policy="best").validate()
    with pytest.raises(ConfigError, match="requires fixed_k"):
        config_for(tmp_path, policy=FIXED).validate()
    with pytest.raises(ConfigError, match="fixed_k must be"):
        config_for(tmp_path, policy=FIXED, fixed_k=1).validate()
    with pytest.raises(ConfigError, match="k_min"):
        config_for(tmp_path, k_min=1).validate()
    with pytest.raises(ConfigError, match="k_min"):
        config_for(tmp_path, k_min=9, k_max=4).validate()
    with pytest.raises(ConfigError, match="workers"):
        config_for(tmp_path, workers=-1).validate()
    with pytest.raises(ConfigError, match="mc_replicates"):
        config_for(tmp_path, mc_replicates=0).validate()


def test_manifest_reflects_run(three_archetype_spec, tmp_path):
    labeled = generate(three_archetype_spec, 60, seed=5)
    save_cohort(labeled.cohort, tmp_path)
    config = config_for(tmp_path, fixed_k=3, policy=FIXED)
    manifest = run_pipeline(config)
    with open(os.path.join(config.out_dir, RUN_FILE)) as fh:
        on_disk = json.load(fh)
    assert manifest == on_disk
    assert manifest["n_patients"] == 60
    assert manifest["chosen_k"] == 3
    assert sum(manifest["cluster_sizes"]) == 60
    assert manifest["config"]["catalog"] == "builtin"
    assert manifest["config"]["policy"] == FIXED
    assert manifest["diagnostics"]["monotone_heights"] is True
    assert manifest["diagnostics"]["empty_union_pairs"] >= 0
    assert set(manifest["timings"]) == {
        "load", "distance", "linkage", "selection", "cut", "characterize", "write"
    }
    assert manifest["versions"]["trajclust"]


def test_pipeline_k_range_clamped_to_cohort(three_archetype_spec, tmp_path):
    labeled = generate(three_archetype_spec, 12, seed=6)
    save_cohort(labeled.cohort, tmp_path)
    # k_max=20 exceeds n-1=11; the scan must clamp instead of failing
    manifest = run_pipeline(config_for(tmp_path))
    assert 2 <= manifest["chosen_k"] <= 11
