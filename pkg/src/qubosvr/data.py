"""Training data container used by the dual builder and the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

Array = np.ndarray


@dataclass(frozen=True)
class TrainingSet:
    """Regression training data: row-wise inputs and one target per row.

    Parameters
    ----------
    xs : (M, F) float array
        Input vectors, one per row. M >= 1, F >= 1.
    ys : (M,) float array
        Regression targets.
    """

    xs: Array
    ys: Array

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 2 or xs.shape[0] < 1 or xs.shape[1] < 1:
            raise InvalidInputError(
                f"xs must be a (M, F) matrix with M, F >= 1, got shape {xs.shape}"
            )
        if ys.shape != (xs.shape[0],):
            raise InvalidInputError(
                f"ys must have shape ({xs.shape[0]},), got {ys.shape}"
            )
        if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
            raise InvalidInputError("training data must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n_samples(self) -> int:
        return self.xs.shape[0]

    @property
    def n_features(self) -> int:
        return self.xs.shape[1]
