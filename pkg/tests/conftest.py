import numpy as np
import pytest

from osruq.gallery import Gallery, GalleryModel


def random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_gallery(rng: np.random.Generator, k: int, d: int) -> Gallery:
    means = rng.standard_normal((k, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    return Gallery(class_ids=tuple(f"c{i:03d}" for i in range(k)), means=means)


def random_model(rng: np.random.Generator, k: int, d: int,
                 kappa_max: float = 50.0) -> GalleryModel:
    kappa = float(rng.uniform(0.1, kappa_max))
    beta = float(rng.uniform(0.05, 0.95))
    return GalleryModel(gallery=random_gallery(rng, k, d), kappa=kappa, beta=beta)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240816)
