"""Reduction of the support-vector-regression dual to a QUBO.

The dual problem minimizes 0.5 * a @ q @ a + c @ a over 2M multipliers
(M "plus" multipliers followed by M "minus" ones) subject to the box
0 <= a_i <= gamma and the balance constraint sum(plus) == sum(minus).

Each multiplier is encoded with `bits` binary variables carrying weights
2^i / 2^frac_bits, and the balance constraint is folded in as a squared
penalty, giving an unconstrained binary quadratic form E(a) = a @ Q @ a
whose value equals the penalized Lagrangian of the decoded multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrainingSet
from .errors import InvalidInputError
from .kernels import KernelSpec, gram

Array = np.ndarray


@dataclass(frozen=True)
class DualProblem:
    """Quadratic dual: minimize 0.5 * a @ q @ a + c @ a.

    q is the (2M, 2M) block matrix [[K, -K], [-K, K]] built from the
    kernel Gram matrix K; c stacks (epsilon - y) then (epsilon + y).
    """

    q: Array
    c: Array
    n_samples: int
    epsilon: float

    def __post_init__(self):
        m = self.n_samples
        if m < 1:
            raise InvalidInputError("n_samples must be >= 1")
        if self.q.shape != (2 * m, 2 * m):
            raise InvalidInputError(f"q must be ({2*m}, {2*m}), got {self.q.shape}")
        if self.c.shape != (2 * m,):
            raise InvalidInputError(f"c must be ({2*m},), got {self.c.shape}")

    @property
    def n_multipliers(self) -> int:
        return 2 * self.n_samples


@dataclass(frozen=True)
class Encoding:
    """Fixed-point binary encoding of one multiplier.

    bits binary variables, the i-th weighted 2^i / 2^frac_bits, encode
    values 0, 2^-frac_bits, ..., (2^bits - 1) / 2^frac_bits. The largest
    representable value doubles as the box bound gamma.
    """

    bits: int
    frac_bits: int = 0

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or self.bits < 1:
            raise InvalidInputError(f"bits must be a positive integer, got {self.bits!r}")
        if not isinstance(self.frac_bits, (int, np.integer)) or self.frac_bits < 0:
            raise InvalidInputError(
                f"frac_bits must be a nonnegative integer, got {self.frac_bits!r}"
            )
        if self.frac_bits >= self.bits:
            raise InvalidInputError(
                f"frac_bits ({self.frac_bits}) must be < bits ({self.bits}) "
                "so that gamma >= 1"
            )

    @property
    def gamma(self) -> float:
        """Largest encodable value, (2^bits - 1) / 2^frac_bits."""
        return float(2**self.bits - 1) / float(2**self.frac_bits)

    @property
    def precision(self) -> float:
        """Half the encoding step, 2^-(frac_bits + 1)."""
        return 2.0 ** -(self.frac_bits + 1)

    def weights(self) -> Array:
        """Per-bit weights (2^0, ..., 2^(bits-1)) / 2^frac_bits."""
        return 2.0 ** np.arange(self.bits) / float(2**self.frac_bits)


@dataclass(frozen=True)
class QuboProblem:
    """Symmetric QUBO matrix with its provenance.

    E(a) = a @ matrix @ a for binary column a; equals
    lagrangian(dual, lam, decode(a, encoding)).
    """

    matrix: Array
    encoding: Encoding
    lam: float
    dual: DualProblem

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_dual(train: TrainingSet, spec: KernelSpec, epsilon: float) -> DualProblem:
    """Assemble the dual quadratic form for a training set and kernel."""
    epsilon = float(epsilon)
    if not (np.isfinite(epsilon) and epsilon >= 0):
        raise InvalidInputError(f"epsilon must be a nonnegative real, got {epsilon!r}")
    k = gram(spec, train.xs).entries
    q = np.block([[k, -k], [-k, k]])
    c = np.concatenate([epsilon - train.ys, epsilon + train.ys])
    return DualProblem(q=q, c=c, n_samples=train.n_samples, epsilon=epsilon)


def _check_bits(bits_vec, dim: int | None = None) -> Array:
    a = np.asarray(bits_vec)
    if a.ndim != 1:
        raise InvalidInputError(f"bit vector must be 1D, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise InvalidInputError("bit vector entries must be 0 or 1")
    if dim is not None and a.shape[0] != dim:
        raise InvalidInputError(f"bit vector length {a.shape[0]} != expected {dim}")
    return a.astype(float)


def decode(bits_vec, encoding: Encoding) -> Array:
    """Decode concatenated per-multiplier bit groups into multiplier values.

    Group m occupies positions [m * bits, (m+1) * bits), least significant
    bit first. Decoding the all-ones vector gives exactly encoding.gamma
    for every multiplier.
    """
    a = _check_bits(bits_vec)
    if a.shape[0] % encoding.bits != 0:
        raise InvalidInputError(
            f"bit vector length {a.shape[0]} is not a multiple of bits={encoding.bits}"
        )
    groups = a.reshape(-1, encoding.bits)
    return groups @ encoding.weights()


def lagrangian(dual: DualProblem, lam: float, alphas) -> float:
    """Penalized dual objective at a multiplier vector.

    0.5 * a @ q @ a + c @ a + lam * (sum(plus) - sum(minus))^2.
    """
    alphas = np.asarray(alphas, dtype=float)
    n = dual.n_multipliers
    if alphas.shape != (n,):
        raise InvalidInputError(f"alphas must have shape ({n},), got {alphas.shape}")
    m = dual.n_samples
    imbalance = float(np.sum(alphas[:m]) - np.sum(alphas[m:]))
    return float(
        0.5 * alphas @ dual.q @ alphas + dual.c @ alphas + lam * imbalance**2
    )


def build_qubo(dual: DualProblem, encoding: Encoding, lam: float) -> QuboProblem:
    """Expand the penalized dual over the binary encoding.

    Bit row index breaks down as (multiplier n, bit i); the entry couples
    encoded weights with the dual quadratic, puts the linear coefficients
    on the diagonal, and adds the balance penalty with sign -1 between
    plus and minus blocks, +1 within a block.
    """
    lam = float(lam)
    if not (np.isfinite(lam) and lam >= 0):
        raise InvalidInputError(f"lam must be a nonnegative real, got {lam!r}")
    m = dual.n_samples
    dim = dual.n_multipliers * encoding.bits
    rows = np.arange(dim)
    mult = rows // encoding.bits
    bit = rows % encoding.bits
    w = 2.0**bit / float(2**encoding.frac_bits)

    theta = (mult - m >= 0).astype(float)  # 1 on the minus block, 0 on the plus block
    cross = np.outer(1.0 - theta, theta) + np.outer(theta, 1.0 - theta)

    ww = np.outer(w, w)
    q = 0.5 * ww * dual.q[np.ix_(mult, mult)]
    q += lam * ww * (1.0 - 2.0 * cross)
    q[rows, rows] += w * dual.c[mult]
    return QuboProblem(matrix=q, encoding=encoding, lam=lam, dual=dual)


def energy(problem: QuboProblem, bits_vec) -> float:
    """E(a) = a @ matrix @ a for a binary vector a."""
    a = _check_bits(bits_vec, problem.dim)
    return float(a @ problem.matrix @ a)


def to_ising(problem: QuboProblem) -> tuple[Array, dict[tuple[int, int], float], float]:
    """Convert to Ising form under s_i = 2 a_i - 1.

    Returns (h, j, offset) with j holding only nonzero upper-triangle
    couplings, such that for every spin assignment
    sum(h * s) + sum(j[i, k] * s_i * s_k) + offset == energy(problem, a).
    """
    q = problem.matrix
    dim = problem.dim
    h = 0.5 * q.sum(axis=1)
    j: dict[tuple[int, int], float] = {}
    for i in range(dim):
        for k in range(i + 1, dim):
            v = 0.5 * q[i, k]
            if v != 0.0:
                j[(i, k)] = float(v)
    offset = 0.25 * float(q.sum()) + 0.25 * float(np.trace(q))
    return h, j, offset


def qubo_to_text(problem: QuboProblem) -> str:
    """Serialize as plain text: a header line, then nonzero upper-triangle
    entries in row-major order as "i j value" with full float precision."""
    lines = [f"qubo {problem.dim}"]
    q = problem.matrix
    for i in range(problem.dim):
        for k in range(i, problem.dim):
            v = q[i, k]
            if v != 0.0:
                lines.append(f"{i} {k} {float(v)!r}")
    return "\n".join(lines) + "\n"
