"""Shared synthetic data builders for the test suite."""

import numpy as np
import pytest

from qubosvr.data import TrainingSet
from qubosvr.features import N_FEATURES, FaceAnnotation, write_annotations, write_netpbm
from qubosvr.pipeline import FeatureStore
from qubosvr.qubo import build_dual
from qubosvr.kernels import GaussianKernel, LinearKernel, PolynomialKernel


def random_training_set(rng, n_samples, n_features=3, y_scale=1.0):
    return TrainingSet(
        xs=rng.normal(size=(n_samples, n_features)),
        ys=y_scale * rng.normal(size=n_samples),
    )


def random_kernel(rng):
    pick = rng.integers(0, 3)
    if pick == 0:
        return LinearKernel()
    if pick == 1:
        return PolynomialKernel(degree=2, shift=float(rng.uniform(0.0, 1.0)))
    return GaussianKernel(eta=float(rng.uniform(0.2, 2.0)))


def random_dual(rng, n_samples, n_features=3, epsilon=0.1):
    return build_dual(
        random_training_set(rng, n_samples, n_features), random_kernel(rng), epsilon
    )


N_INFORMATIVE = 6


def affine_feature_store(
    n_images=12,
    n_landmarks=5,
    seed=7,
    amplitude=5.0,
    n_test=3,
) -> FeatureStore:
    """Feature store whose targets are affine in the first six columns.

    The informative columns vary in [0, 0.3]; every other column is a
    constant, so Pearson selection provably picks the informative six.
    Boxes span (0, 0, 90, 90), making the raw and normalized frames
    coincide.
    """
    rng = np.random.default_rng(seed)
    features = np.full((n_images, N_FEATURES), 1.0 / 59.0)
    informative = 0.3 * rng.random((n_images, N_INFORMATIVE))
    features[:, :N_INFORMATIVE] = informative

    two_l = 2 * n_landmarks
    weights = rng.uniform(-1.0, 1.0, size=(two_l, N_INFORMATIVE))
    weights /= np.abs(weights).sum(axis=1, keepdims=True)
    centered = informative - informative.mean(axis=0)
    targets = np.empty((n_images, two_l))
    for ell in range(two_l):
        drive = centered @ weights[ell]
        spread = max(float(np.abs(drive).max()), 1e-9)
        targets[:, ell] = 45.0 + amplitude * drive / spread

    is_test = np.zeros(n_images, dtype=bool)
    order = rng.permutation(n_images)
    is_test[order[:n_test]] = True
    return FeatureStore(
        names=tuple(f"img{i:03d}.pgm" for i in range(n_images)),
        features=features,
        targets=targets,
        shapes=targets.copy(),  # identity frame: box (0, 0, 90, 90)
        boxes=np.tile(np.array([0, 0, 90, 90]), (n_images, 1)),
        is_test=is_test,
        seed=seed,
        test_frac=n_test / n_images,
    )


def write_image_dataset(root, n_images=12, n_landmarks=5, seed=3, color_every=4):
    """Write synthetic netpbm images plus a matching annotation CSV.

    Returns (images_dir, annotations_path). Images carry seeded random
    texture; annotations place landmarks inside each face box.
    """
    rng = np.random.default_rng(seed)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    annotations = []
    for i in range(n_images):
        h = int(rng.integers(100, 140))
        w = int(rng.integers(100, 140))
        if color_every and i % color_every == 0:
            img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
            name = f"face{i:03d}.ppm"
        else:
            img = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            name = f"face{i:03d}.pgm"
        write_netpbm(images_dir / name, img)
        x1 = float(rng.uniform(1.0, 6.0))
        y1 = float(rng.uniform(1.0, 6.0))
        x2 = x1 + float(rng.uniform(80.0, w - x1 - 2))
        y2 = y1 + float(rng.uniform(80.0, h - y1 - 2))
        shape = []
        for _ in range(n_landmarks):
            shape.append(float(rng.uniform(x1 + 2, x2 - 2)))
            shape.append(float(rng.uniform(y1 + 2, y2 - 2)))
        annotations.append(
            FaceAnnotation(image=name, shape=np.asarray(shape), box=np.asarray([x1, y1, x2, y2]))
        )
    annotations_path = root / "annotations.csv"
    write_annotations(annotations_path, annotations)
    return images_dir, annotations_path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
