"""Epsilon-tube support vector regression via the encoded dual.

Training reduces the dual to the penalized quadratic form of
:mod:`qubosvr.qubo`, solves it by simulated annealing (optionally
averaging an ensemble of runs), exact enumeration, or the classical
projected-gradient reference, recovers the offset from the
Karush-Kuhn-Tucker bounds, and packages a predictor.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .data import TrainingSet
from .errors import InvalidInputError, ModelFormatError, QuboSvrError
from .kernels import (
    KernelSpec,
    kernel_matrix,
    kernel_spec_from_dict,
    kernel_spec_to_dict,
)
from .qubo import DualProblem, Encoding, build_dual, build_qubo
from .solvers import (
    EXACT_MAX_BITS,
    SaConfig,
    average_low_energy,
    minimize_encoded_exact,
    solve_dual_baseline,
    solve_exact,
    solve_sa,
)

Array = np.ndarray

MODEL_FORMAT_VERSION = 1

METHOD_ANNEALING = "annealing"
METHOD_EXACT = "exact"
METHOD_BASELINE = "baseline"
METHODS = (METHOD_ANNEALING, METHOD_EXACT, METHOD_BASELINE)

_INTERIOR_TOL = 1e-12


@dataclass(frozen=True)
class HyperParams:
    """Model hyperparameters.

    Exactly one of `encoding` (annealing/exact methods; its largest
    encodable value is the box bound) or `box_bound` (baseline method)
    must be given. `lam` weighs the balance-constraint penalty and only
    matters for the encoded methods.
    """

    kernel: KernelSpec
    epsilon: float = 0.1
    encoding: Encoding | None = None
    box_bound: float | None = None
    lam: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInputError(f"epsilon must be a nonnegative real, got {self.epsilon!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidInputError(f"lam must be a nonnegative real, got {self.lam!r}")
        if (self.encoding is None) == (self.box_bound is None):
            raise InvalidInputError("exactly one of encoding or box_bound must be set")
        if self.box_bound is not None and not self.box_bound > 0:
            raise InvalidInputError(f"box_bound must be positive, got {self.box_bound!r}")

    @property
    def bound(self) -> float:
        """Box bound on each multiplier (derived from the encoding if present)."""
        return self.encoding.gamma if self.encoding is not None else float(self.box_bound)


@dataclass(frozen=True)
class OffsetBounds:
    """Offset bracket from the optimality conditions.

    lower/upper come from max/min over the admissible candidate values;
    with a valid optimum lower <= upper up to solver error. b_minus and
    b_plus hold the per-sample candidates (-epsilon + y - f, +epsilon +
    y - f); the index arrays record which samples contributed to each
    bound. An empty candidate side yields an infinite bound.
    """

    lower: float
    upper: float
    b_minus: Array
    b_plus: Array
    lower_from_minus: Array
    lower_from_plus: Array
    upper_from_minus: Array
    upper_from_plus: Array


def _split(alphas: Array, n_samples: int) -> tuple[Array, Array]:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (2 * n_samples,):
        raise InvalidInputError(
            f"alphas must have shape ({2 * n_samples},), got {alphas.shape}"
        )
    return alphas[:n_samples], alphas[n_samples:]


def offset_bounds(
    alphas, train: TrainingSet, kernel: KernelSpec, epsilon: float, bound: float
) -> OffsetBounds:
    """Bracket the offset using the box state of each multiplier.

    Multipliers strictly below the box bound admit the sample's b_minus
    into the lower bound; strictly positive minus-multipliers do too.
    Symmetrically for the upper bound.
    """
    if not bound > 0:
        raise InvalidInputError(f"bound must be positive, got {bound}")
    m = train.n_samples
    plus, minus = _split(alphas, m)
    k = kernel_matrix(kernel, train.xs, train.xs)
    raw = k.T @ (plus - minus)  # predictions without offset at the training points
    b_minus = -epsilon + train.ys - raw
    b_plus = epsilon + train.ys - raw

    lower_from_minus = np.nonzero(plus < bound)[0]
    lower_from_plus = np.nonzero(minus > 0)[0]
    upper_from_minus = np.nonzero(plus > 0)[0]
    upper_from_plus = np.nonzero(minus < bound)[0]

    lower_cands = np.concatenate([b_minus[lower_from_minus], b_plus[lower_from_plus]])
    upper_cands = np.concatenate([b_minus[upper_from_minus], b_plus[upper_from_plus]])
    if lower_cands.size == 0 and upper_cands.size == 0:
        raise QuboSvrError("offset candidate sets are both empty; bound must be 0")
    lower = float(lower_cands.max()) if lower_cands.size else -math.inf
    upper = float(upper_cands.min()) if upper_cands.size else math.inf
    return OffsetBounds(
        lower=lower,
        upper=upper,
        b_minus=b_minus,
        b_plus=b_plus,
        lower_from_minus=lower_from_minus,
        lower_from_plus=lower_from_plus,
        upper_from_minus=upper_from_minus,
        upper_from_plus=upper_from_plus,
    )


def estimate_offset(bounds: OffsetBounds, alphas, bound: float) -> float:
    """Point estimate of the offset.

    If any multiplier is strictly inside (0, bound) (tolerance 1e-12 on
    both strict inequalities), return the mean of the corresponding
    b_minus (for plus-multipliers) and b_plus (for minus-multipliers)
    values; otherwise the midpoint of the bracket.
    """
    m = bounds.b_minus.shape[0]
    plus, minus = _split(alphas, m)
    interior_plus = (plus > _INTERIOR_TOL) & (bound - plus > _INTERIOR_TOL)
    interior_minus = (minus > _INTERIOR_TOL) & (bound - minus > _INTERIOR_TOL)
    values = np.concatenate(
        [bounds.b_minus[interior_plus], bounds.b_plus[interior_minus]]
    )
    if values.size:
        return float(values.mean())
    if not math.isfinite(bounds.lower):
        return bounds.upper
    if not math.isfinite(bounds.upper):
        return bounds.lower
    return 0.5 * (bounds.lower + bounds.upper)


@dataclass(frozen=True)
class SvrModel:
    """Trained regressor: f(x) = sum_i (plus_i - minus_i) k(x_i, x) + offset."""

    kernel: KernelSpec
    epsilon: float
    bound: float
    alphas: Array
    support_xs: Array
    offset: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.support_xs.shape[0]
        if self.alphas.shape != (2 * m,):
            raise InvalidInputError(
                f"alphas must have shape ({2 * m},), got {self.alphas.shape}"
            )
        if (self.alphas < -1e-12).any() or (self.alphas > self.bound + 1e-12).any():
            raise InvalidInputError("multipliers must lie in [0, bound]")

    @property
    def coefficients(self) -> Array:
        """Per-support-vector weights plus_i - minus_i."""
        m = self.support_xs.shape[0]
        return self.alphas[:m] - self.alphas[m:]

    def predict(self, x) -> float:
        """Predict a single target."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.support_xs.shape[1],):
            raise InvalidInputError(
                f"x must have shape ({self.support_xs.shape[1]},), got {x.shape}"
            )
        return float(self.predict_batch(x[None, :])[0])

    def predict_batch(self, xs) -> Array:
        """Predict targets for rows of xs."""
        cross = kernel_matrix(self.kernel, self.support_xs, xs)
        return self.coefficients @ cross + self.offset


def _derive_seed(*parts: int) -> int:
    """Stable scalar seed from integer parts (for per-member solver streams)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _finish_model(
    alphas: Array,
    train: TrainingSet,
    hp: HyperParams,
    method: str,
    metadata: dict,
) -> SvrModel:
    bounds = offset_bounds(alphas, train, hp.kernel, hp.epsilon, hp.bound)
    offset = estimate_offset(bounds, alphas, hp.bound)
    metadata = dict(metadata)
    metadata["method"] = method
    metadata["offset_bracket"] = [bounds.lower, bounds.upper]
    return SvrModel(
        kernel=hp.kernel,
        epsilon=hp.epsilon,
        bound=hp.bound,
        alphas=alphas,
        support_xs=train.xs,
        offset=offset,
        metadata=metadata,
    )


def train(
    train_set: TrainingSet,
    hp: HyperParams,
    method: str = METHOD_ANNEALING,
    ensemble: int = 20,
    sa_config: SaConfig | None = None,
    baseline_tol: float = 1e-10,
    baseline_max_iter: int = 10000,
) -> SvrModel:
    """Train a regressor.

    annealing: `ensemble` independent annealing runs (seeds derived from
    sa_config.seed and the member index); each run keeps its
    `keep_best` lowest-energy samples, decodes and averages them; the
    member multiplier vectors and offsets are averaged into the model,
    which is equivalent to averaging the member predictors.

    exact: exhaustive enumeration when the bit count allows, otherwise an
    exact closed-form-assisted grid sweep; deterministic, ensemble is
    ignored.

    baseline: projected gradient descent on the constrained dual;
    encoding is not needed (box_bound drives the box).
    """
    if method not in METHODS:
        raise InvalidInputError(f"method must be one of {METHODS}, got {method!r}")
    if ensemble < 1:
        raise InvalidInputError(f"ensemble must be >= 1, got {ensemble}")
    dual = build_dual(train_set, hp.kernel, hp.epsilon)

    if method == METHOD_BASELINE:
        result = solve_dual_baseline(
            dual, hp.bound, tol=baseline_tol, max_iter=baseline_max_iter
        )
        return _finish_model(
            result.alphas,
            train_set,
            hp,
            method,
            {
                "converged": result.converged,
                "iterations": result.n_iter,
                "objective": result.objective,
            },
        )

    if hp.encoding is None:
        raise InvalidInputError(f"method {method!r} requires an encoding")
    encoding = hp.encoding

    if method == METHOD_EXACT:
        n_bits = dual.n_multipliers * encoding.bits
        if n_bits <= EXACT_MAX_BITS:
            qp = build_qubo(dual, encoding, hp.lam)
            samples = solve_exact(qp, limit=1)
            alphas = average_low_energy(samples, 1, encoding)
            energy_value = float(samples.energies[0])
        else:
            alphas, energy_value = minimize_encoded_exact(dual, encoding, hp.lam)
        return _finish_model(
            alphas, train_set, hp, method, {"lam": hp.lam, "energy": energy_value}
        )

    config = sa_config if sa_config is not None else SaConfig()
    qp = build_qubo(dual, encoding, hp.lam)
    member_alphas = []
    member_offsets = []
    member_seeds = []
    for member in range(ensemble):
        seed = _derive_seed(config.seed, member)
        member_seeds.append(seed)
        samples = solve_sa(qp, replace(config, seed=seed))
        alphas = average_low_energy(samples, config.keep_best, encoding)
        bounds = offset_bounds(alphas, train_set, hp.kernel, hp.epsilon, hp.bound)
        member_alphas.append(alphas)
        member_offsets.append(estimate_offset(bounds, alphas, hp.bound))
    mean_alphas = np.mean(member_alphas, axis=0)
    mean_offset = float(np.mean(member_offsets))
    bounds = offset_bounds(mean_alphas, train_set, hp.kernel, hp.epsilon, hp.bound)
    model = SvrModel(
        kernel=hp.kernel,
        epsilon=hp.epsilon,
        bound=hp.bound,
        alphas=mean_alphas,
        support_xs=train_set.xs,
        offset=mean_offset,
        metadata={
            "method": method,
            "lam": hp.lam,
            "ensemble": ensemble,
            "seeds": member_seeds,
            "base_seed": config.seed,
            "sweeps": config.sweeps,
            "reads": config.reads,
            "keep_best": config.keep_best,
            "member_alphas": [list(map(float, a)) for a in member_alphas],
            "member_offsets": member_offsets,
            "offset_bracket": [bounds.lower, bounds.upper],
        },
    )
    return model


def model_to_dict(model: SvrModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel": kernel_spec_to_dict(model.kernel),
        "epsilon": float(model.epsilon),
        "gamma": float(model.bound),
        "alphas": [float(a) for a in model.alphas],
        "support_vectors": [[float(v) for v in row] for row in model.support_xs],
        "offset": float(model.offset),
        "metadata": model.metadata,
    }


def model_from_dict(d: dict) -> SvrModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        return SvrModel(
            kernel=kernel_spec_from_dict(d["kernel"]),
            epsilon=float(d["epsilon"]),
            bound=float(d["gamma"]),
            alphas=np.asarray(d["alphas"], dtype=float),
            support_xs=np.asarray(d["support_vectors"], dtype=float),
            offset=float(d["offset"]),
            metadata=dict(d.get("metadata", {})),
        )
    except KeyError as exc:
        raise ModelFormatError(f"model dict is missing key {exc}") from None


def save_model(model: SvrModel, path: str | os.PathLike) -> None:
    """Write the model as JSON; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> SvrModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
