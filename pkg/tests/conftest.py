"""Shared fixtures: one small prepared dataset, model, and explanation set.

Session scope keeps the expensive pieces (training, explaining) to a single
build; tests must not mutate them.
"""

import numpy as np
import pytest

from explaudit import explainers, fixtures, nn, tabular


def make_bundle(name="adult", rows=600, seed=0, split_seed=0):
    raw = fixtures.generate(name, rows=rows, seed=seed)
    cfg = fixtures.dataset_config(name)
    sens = [tabular.SensitiveSpec.parse(s) for s in cfg["sensitive"]]
    ds = tabular.preprocess(raw, sens, cfg["target_positive"])
    return tabular.split(ds, seed=split_seed)


@pytest.fixture(scope="session")
def adult_bundle():
    return make_bundle()


@pytest.fixture(scope="session")
def adult_model(adult_bundle):
    train_ds = adult_bundle.target_train
    model = nn.init_model(train_ds.n_features, nn.architecture("default"), seed=0)
    model, _ = nn.train(model, train_ds, nn.TrainConfig(epochs=8), seed=0)
    return model


@pytest.fixture(scope="session")
def adult_ig(adult_bundle, adult_model):
    cfg = explainers.ExplainerConfig(ig_steps=30)
    return explainers.explain_dataset(
        adult_model, adult_bundle.aux_all(), "ig", cfg, seed=0
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
