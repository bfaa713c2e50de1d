"""Kernel functions for support vector regression.

Three kernel families are supported: linear, polynomial and Gaussian.
A kernel spec is a small frozen value object; `gram` evaluates it on a
sample matrix and returns an exactly symmetric Gram matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError

Array = np.ndarray


@dataclass(frozen=True)
class LinearKernel:
    """k(a, b) = a . b"""

    kind: str = "linear"

    def __post_init__(self):
        if self.kind != "linear":
            raise InvalidInputError("LinearKernel.kind must be 'linear'")


@dataclass(frozen=True)
class PolynomialKernel:
    """k(a, b) = (a . b + shift) ** degree

    degree is a positive integer; shift may be any real.
    """

    degree: int = 2
    shift: float = 0.0
    kind: str = "polynomial"

    def __post_init__(self):
        if self.kind != "polynomial":
            raise InvalidInputError("PolynomialKernel.kind must be 'polynomial'")
        if not isinstance(self.degree, (int, np.integer)) or self.degree < 1:
            raise InvalidInputError(f"degree must be a positive integer, got {self.degree!r}")
        if not math.isfinite(self.shift):
            raise InvalidInputError("shift must be finite")


@dataclass(frozen=True)
class GaussianKernel:
    """k(a, b) = exp(-eta * ||a - b||^2) with width parameter eta > 0."""

    eta: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise InvalidInputError("GaussianKernel.kind must be 'gaussian'")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise InvalidInputError(f"eta must be a positive real, got {self.eta!r}")


KernelSpec = LinearKernel | PolynomialKernel | GaussianKernel


@dataclass(frozen=True)
class GramMatrix:
    """Kernel matrix of a sample set against itself.

    entries is (M, M), exactly symmetric; for a Gaussian kernel the
    diagonal is exactly 1.
    """

    entries: Array
    spec: KernelSpec


def kernel_spec_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, LinearKernel):
        return {"kind": "linear"}
    if isinstance(spec, PolynomialKernel):
        return {"kind": "polynomial", "degree": int(spec.degree), "shift": float(spec.shift)}
    if isinstance(spec, GaussianKernel):
        return {"kind": "gaussian", "eta": float(spec.eta)}
    raise InvalidInputError(f"unknown kernel spec {spec!r}")


def kernel_spec_from_dict(d: dict) -> KernelSpec:
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise InvalidInputError(f"kernel dict needs a 'kind' key, got {d!r}") from None
    if kind == "linear":
        return LinearKernel()
    if kind == "polynomial":
        return PolynomialKernel(degree=int(d.get("degree", 2)), shift=float(d.get("shift", 0.0)))
    if kind == "gaussian":
        if "eta" not in d:
            raise InvalidInputError("gaussian kernel dict needs 'eta'")
        return GaussianKernel(eta=float(d["eta"]))
    raise InvalidInputError(f"unknown kernel kind {kind!r}")


def _as_matrix(xs, name: str) -> Array:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[0] < 1 or xs.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a nonempty 2D array, got shape {xs.shape}")
    if not np.isfinite(xs).all():
        raise InvalidInputError(f"{name} must be finite")
    return xs


def eval_kernel(spec: KernelSpec, a, b) -> float:
    """Evaluate the kernel on a single pair of equal-length vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InvalidInputError(
            f"expected two equal-length 1D vectors, got shapes {a.shape} and {b.shape}"
        )
    dot = float(a @ b)
    if isinstance(spec, LinearKernel):
        return dot
    if isinstance(spec, PolynomialKernel):
        return float((dot + spec.shift) ** spec.degree)
    if isinstance(spec, GaussianKernel):
        diff = a - b
        return float(np.exp(-spec.eta * (diff @ diff)))
    raise InvalidInputError(f"unknown kernel spec {spec!r}")


def kernel_matrix(spec: KernelSpec, xs, zs) -> Array:
    """Cross-kernel matrix K[i, j] = k(xs[i], zs[j]), shape (len(xs), len(zs))."""
    xs = _as_matrix(xs, "xs")
    zs = _as_matrix(zs, "zs")
    if xs.shape[1] != zs.shape[1]:
        raise InvalidInputError(
            f"feature dimensions differ: {xs.shape[1]} vs {zs.shape[1]}"
        )
    dots = xs @ zs.T
    if isinstance(spec, LinearKernel):
        return dots
    if isinstance(spec, PolynomialKernel):
        return (dots + spec.shift) ** spec.degree
    if isinstance(spec, GaussianKernel):
        # ||x - z||^2 = |x|^2 + |z|^2 - 2 x.z, clipped against float cancellation
        sq = (
            np.sum(xs * xs, axis=1)[:, None]
            + np.sum(zs * zs, axis=1)[None, :]
            - 2.0 * dots
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-spec.eta * sq)
    raise InvalidInputError(f"unknown kernel spec {spec!r}")


def gram(spec: KernelSpec, xs) -> GramMatrix:
    """Kernel matrix of xs against itself.

    The result is exactly symmetric (upper triangle mirrored), and for a
    Gaussian kernel the diagonal is exactly 1 because the self-distance
    is forced to zero before exponentiation.
    """
    xs = _as_matrix(xs, "xs")
    dots = xs @ xs.T
    if isinstance(spec, LinearKernel):
        k = dots.copy()
    elif isinstance(spec, PolynomialKernel):
        k = (dots + spec.shift) ** spec.degree
    elif isinstance(spec, GaussianKernel):
        norms = np.sum(xs * xs, axis=1)
        sq = norms[:, None] + norms[None, :] - 2.0 * dots
        np.maximum(sq, 0.0, out=sq)
        np.fill_diagonal(sq, 0.0)
        k = np.exp(-spec.eta * sq)
    else:
        raise InvalidInputError(f"unknown kernel spec {spec!r}")
    k = np.triu(k) + np.triu(k, 1).T
    return GramMatrix(entries=k, spec=spec)


def default_eta(n_features: int, variance: float) -> float:
    """Default Gaussian width: 1 / (n_features * variance).

    variance is typically the mean per-feature variance of the training
    inputs. Zero variance has no meaningful scale and is rejected.
    """
    if not isinstance(n_features, (int, np.integer)) or n_features < 1:
        raise InvalidInputError(f"n_features must be a positive integer, got {n_features!r}")
    variance = float(variance)
    if not math.isfinite(variance) or variance < 0:
        raise InvalidInputError(f"variance must be a finite nonnegative real, got {variance!r}")
    if variance == 0:
        raise DegenerateDataError("feature variance is zero; no kernel width can be derived")
    return 1.0 / (n_features * variance)
