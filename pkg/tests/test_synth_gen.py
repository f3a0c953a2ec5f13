"""
Tests for the synthetic dataset generator.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from topolog.errors import DegenerateConfig
from topolog.log_model import EventType, Label, REQUIRED_ATTRIBUTES, SYSMON_IDS, serialize_run
from topolog.synth_gen import (
    GenConfig,
    RunProfile,
    generate,
    generate_run,
    write_dataset,
)


# ============================================================================
# Fixtures
# ============================================================================

@pytest.fixture
def small_config():
    """
    Small generator configuration for fast tests.

    Returns:
        GenConfig: 8 runs, half anomalous, seed 7
    """
    return GenConfig(seed=7, n_runs=8, anomaly_fraction=0.5, run_duration=60.0)


# ============================================================================
# Tests for generate
# ============================================================================

def test_generate_labels_and_ids(small_config):
    """
    Test run ids, ordering and the anomalous share.
    """
    runs = generate(small_config)
    assert [r.run_id for r in runs] == [f"run-{i:04d}" for i in range(8)]
    labels = [r.label for r in runs]
    assert labels.count(Label.ANOMALOUS) == 4
    assert labels.count(Label.BENIGN) == 4


def test_generate_is_deterministic(small_config):
    """
    Test that the same seed gives identical runs and serializations.
    """
    first = generate(small_config)
    second = generate(small_config)
    assert [serialize_run(r) for r in first] == [serialize_run(r) for r in second]


def test_generate_seed_changes_output(small_config):
    """
    Test that another seed gives another dataset.
    """
    other = small_config.model_copy(update={"seed": 8})
    assert [serialize_run(r) for r in generate(small_config)] != [serialize_run(r) for r in generate(other)]


def test_distinct_seeds_give_distinct_datasets():
    """
    Test that ten seeds give ten different datasets.
    """
    datasets = {
        tuple(serialize_run(r) for r in generate(GenConfig(seed=seed, n_runs=4, run_duration=30.0)))
        for seed in range(10)
    }
    assert len(datasets) == 10


def test_generate_parallel_matches_serial(small_config):
    """
    Test that worker count does not change the generated runs.
    """
    serial = generate(small_config, n_jobs=1)
    parallel = generate(small_config, n_jobs=2)
    assert [serialize_run(r) for r in serial] == [serialize_run(r) for r in parallel]


def test_generated_events_are_valid(small_config):
    """
    Test timestamps, required attributes and Sysmon ids of generated events.
    """
    for run in generate(small_config):
        assert run.events[0].event_type is EventType.PROCESS_CREATE
        times = [e.timestamp for e in run.events]
        assert times == sorted(times)
        assert all(0.0 <= t <= small_config.run_duration for t in times)
        assert all(round(t, 3) == t for t in times)
        for event in run.events:
            for name in REQUIRED_ATTRIBUTES[event.event_type]:
                assert name in event.attributes
            assert event.attributes["sysmon_id"] == SYSMON_IDS[event.event_type]


def test_anomalous_profile_is_busier():
    """
    Test that anomalous runs have more network events on average.
    """
    runs = generate(GenConfig(seed=3, n_runs=40))

    def mean_connects(label):
        counts = [
            sum(e.event_type is EventType.NETWORK_CONNECT for e in r.events)
            for r in runs if r.label is label
        ]
        return np.mean(counts)

    assert mean_connects(Label.ANOMALOUS) > mean_connects(Label.BENIGN)


def test_anomalous_runs_sweep_one_port():
    """
    Test that anomalous runs hold a process contacting many hosts on one port and benign runs do not.
    """
    runs = generate(GenConfig(seed=3, n_runs=20))

    def widest_sweep(run):
        hosts = {}
        for e in run.events:
            if e.event_type is EventType.NETWORK_CONNECT:
                key = (e.attributes["process_id"], e.attributes["dst_port"])
                hosts.setdefault(key, set()).add(e.attributes["dst_ip"])
        return max((len(h) for h in hosts.values()), default=0)

    for run in runs:
        if run.label is Label.ANOMALOUS:
            assert widest_sweep(run) >= 30
        else:
            assert widest_sweep(run) < 30


def test_generate_run_uses_seed_sequence():
    """
    Test that generate_run is a pure function of its seed sequence.
    """
    profile = RunProfile()
    a = generate_run("r", Label.BENIGN, profile, 30.0, np.random.SeedSequence([1, 2]))
    b = generate_run("r", Label.BENIGN, profile, 30.0, np.random.SeedSequence([1, 2]))
    assert a == b


# ============================================================================
# Tests for configuration checks
# ============================================================================

@pytest.mark.parametrize("update", [
    {"n_runs": 1},
    {"anomaly_fraction": 0.0},
    {"anomaly_fraction": 1.0},
    {"anomaly_fraction": 1.5},
    {"run_duration": 0.0},
    {"seed": -1},
])
def test_degenerate_config(small_config, update):
    """
    Test that configurations that cannot yield both labels are rejected.
    """
    with pytest.raises(DegenerateConfig):
        generate(small_config.model_copy(update=update))


def test_degenerate_profile(small_config):
    """
    Test that an out-of-range probability in a profile is rejected.
    """
    bad = small_config.model_copy(update={"benign_profile": RunProfile(cycle_prob=1.5)})
    with pytest.raises(DegenerateConfig):
        generate(bad)


@pytest.mark.parametrize("update", [{"sweep_prob": -0.1}, {"sweep_size": -1.0}])
def test_degenerate_sweep(small_config, update):
    """
    Test that a negative sweep size or an out-of-range sweep probability is rejected.
    """
    bad = small_config.model_copy(update={"anomalous_profile": RunProfile(**update)})
    with pytest.raises(DegenerateConfig):
        generate(bad)


# ============================================================================
# Tests for write_dataset
# ============================================================================

def test_write_dataset_files(tmp_path, small_config):
    """
    Test that write_dataset writes one JSONL file per run and a manifest.
    """
    manifest = write_dataset(small_config, tmp_path / "data")
    files = sorted(p.name for p in (tmp_path / "data").glob("*.jsonl"))
    assert files == [f"run-{i:04d}.jsonl" for i in range(8)]
    assert (tmp_path / "data" / "manifest.json").exists()
    assert manifest.config["seed"] == 7
    assert len(manifest.runs) == 8


def test_write_dataset_byte_identical(tmp_path, small_config):
    """
    Test that rewriting with the same config gives identical bytes.
    """
    write_dataset(small_config, tmp_path / "a")
    write_dataset(small_config, tmp_path / "b")
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()
