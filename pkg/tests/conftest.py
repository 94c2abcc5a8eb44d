"""Session fixtures: synthetic dataset, curated splits, smoke training run."""

from __future__ import annotations

import time

import pytest
import torch

from sketchface.config import TrainConfig
from sketchface.data import load_manifest, prepare_dataset
from sketchface.predictor import train_attribute_predictor
from sketchface.training import run_training

from helpers import build_synthetic_root, take_first

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    return build_synthetic_root(tmp_path_factory.mktemp("celeba-layout"))


@pytest.fixture(scope="session")
def curated(data_root):
    return prepare_dataset(load_manifest(data_root))


@pytest.fixture(scope="session")
def train_set(curated):
    return curated.subset("train")


@pytest.fixture(scope="session")
def test_set(curated):
    return curated.subset("test")


@pytest.fixture(scope="session")
def smoke16(train_set):
    return take_first(train_set, 16)


@pytest.fixture(scope="session")
def predictor_bundle(train_set):
    return train_attribute_predictor(train_set, seed=0)


@pytest.fixture(scope="session")
def smoke_run(smoke16, tmp_path_factory):
    """500 alternating joint steps on 16 samples; reused across test modules."""
    out = tmp_path_factory.mktemp("smoke-run")
    cfg = TrainConfig.smoke()
    start = time.monotonic()
    trainer = run_training(cfg, smoke16, out, total_steps=500, log_every=0)
    elapsed = time.monotonic() - start
    return {
        "cfg": cfg,
        "trainer": trainer,
        "out": out,
        "elapsed": elapsed,
        "stage1": out / "stage1-000500.ckpt",
        "stage2": out / "stage2-000500.ckpt",
        "metrics": out / "metrics.jsonl",
    }
