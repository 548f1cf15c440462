"""Shared fixtures: a fast small model plus the bundled study outputs.

The bundled runs are session-scoped because training the full-width
classifier takes about a second and the sweep suites a few seconds each;
every test that inspects shipped artifacts reuses the same output trees.
"""
import numpy as np
import pytest

from driftshade import MlpClassifier, SplitSpec, generate_synthetic, split_dataset
from driftshade.harness import normalize_config
from driftshade.repro import rq1_config, run_rq1, run_rq2, run_rq3


@pytest.fixture(scope="session")
def small_split():
    ds = generate_synthetic(150, 8, 3.0, seed=3)
    return split_dataset(ds, SplitSpec(seed=5))


@pytest.fixture(scope="session")
def small_model(small_split):
    train, val, _ = small_split
    model = MlpClassifier(hidden1=16, hidden2=8, batch_size=32, max_epochs=15,
                          random_state=1)
    model.fit(train.features, train.labels, validation=(val.features, val.labels))
    return model


@pytest.fixture(scope="session")
def small_malware_std(small_split, small_model):
    _, _, test = small_split
    return small_model.scaler_.transform(test.malware_rows())


@pytest.fixture(scope="session")
def rq1_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("rq1")
    run_rq1(out, seed=0)
    return out


@pytest.fixture(scope="session")
def rq2_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("rq2")
    run_rq2(out, seed=0)
    return out


@pytest.fixture(scope="session")
def rq3_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("rq3")
    run_rq3(out, seed=0)
    return out


@pytest.fixture(scope="session")
def bundled_model(rq1_out):
    paths = sorted((rq1_out / "model-cache").glob("model-*.npz"))
    assert len(paths) == 1
    return MlpClassifier.load(paths[0])


@pytest.fixture(scope="session")
def bundled_split():
    cfg = normalize_config(rq1_config(seed=0))
    data = cfg["data"]
    ds = generate_synthetic(data["n_per_class"], data["n_features"],
                           data["class_separation"], seed=data["seed"])
    spec = SplitSpec(cfg["split"]["train"], cfg["split"]["val"],
                     cfg["split"]["test"], seed=cfg["split"]["seed"])
    return split_dataset(ds, spec)


def read_report(path):
    """Parse a report.csv into a list of per-attack dicts with floats."""
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key, val in row.items():
            if key in ("attack_id", "objective", "optimizer", "kernel", "detected_by"):
                continue
            row[key] = float(val)
        rows.append(row)
    return rows


def read_series(path):
    """Parse a sweep series csv into (values, metric) arrays."""
    lines = path.read_text().splitlines()
    body = [line.split(",") for line in lines[1:]]
    return (np.array([float(a) for a, _ in body]),
            np.array([float(b) for _, b in body]))
