"""Shared trained model: one real training run per test session.

Training the default config takes a couple of minutes on a laptop CPU; every
test that needs a trained model shares this one.
"""

from types import SimpleNamespace

import pytest

from mvrecon.train import (
    TrainConfig,
    build_dataset,
    evaluate_iou,
    save_checkpoint,
    train_model,
)


@pytest.fixture(scope="session")
def trained():
    cfg = TrainConfig()
    dataset = build_dataset(cfg)
    model, history = train_model(cfg, dataset)
    scores = evaluate_iou(model, dataset.eval, ks=(1, 2, 4, 8))
    return SimpleNamespace(cfg=cfg, dataset=dataset, model=model, history=history, scores=scores)


@pytest.fixture(scope="session")
def checkpoint_dir(trained, tmp_path_factory):
    path = tmp_path_factory.mktemp("checkpoint") / "model"
    save_checkpoint(trained.model, trained.cfg, path)
    return path
