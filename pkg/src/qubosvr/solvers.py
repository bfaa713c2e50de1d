"""Solvers for the encoded dual: simulated annealing, exhaustive
enumeration, an exact grid minimizer, and a classical projected-gradient
reference solver for the constrained dual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidInputError, QuboSvrError
from .qubo import DualProblem, Encoding, QuboProblem, lagrangian

Array = np.ndarray

EXACT_MAX_BITS = 24
EXACT_MAX_COMBOS = 1 << 25


@dataclass(frozen=True)
class SaConfig:
    """Simulated-annealing run parameters.

    One read is one Metropolis chain: `sweeps` passes over all bits under
    a geometric inverse-temperature schedule, single-bit flips. beta_range
    of None derives the schedule from the QUBO coefficients. The seed is
    explicit; equal configs reproduce bit-identical sample sets.
    """

    sweeps: int = 1000
    reads: int = 1000
    keep_best: int = 20
    seed: int = 0
    beta_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.sweeps < 1:
            raise InvalidInputError(f"sweeps must be >= 1, got {self.sweeps}")
        if self.reads < 1:
            raise InvalidInputError(f"reads must be >= 1, got {self.reads}")
        if not 1 <= self.keep_best <= self.reads:
            raise InvalidInputError(
                f"keep_best must be in [1, reads], got {self.keep_best} with reads={self.reads}"
            )
        if self.beta_range is not None:
            lo, hi = self.beta_range
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise InvalidInputError(f"beta_range must satisfy 0 < lo <= hi, got {self.beta_range}")


@dataclass(frozen=True)
class SampleSet:
    """Solver output: bit vectors sorted by energy.

    bits is (n, dim) uint8; energies is (n,). Rows are sorted ascending
    by energy, exact ties broken by lexicographic bit order. config echoes
    the annealer configuration (None for exhaustive enumeration).
    """

    bits: Array
    energies: Array
    config: SaConfig | None = None

    def __post_init__(self):
        if self.bits.ndim != 2 or self.energies.shape != (self.bits.shape[0],):
            raise InvalidInputError("bits must be (n, dim) with matching energies (n,)")

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def best(self) -> tuple[Array, float]:
        return self.bits[0], float(self.energies[0])


def _sorted_sample_set(bits: Array, energies: Array, config: SaConfig | None) -> SampleSet:
    order = sorted(range(bits.shape[0]), key=lambda r: (energies[r], bits[r].tobytes()))
    order = np.asarray(order, dtype=np.intp)
    return SampleSet(bits=bits[order], energies=energies[order], config=config)


def default_beta_range(matrix: Array) -> tuple[float, float]:
    """Geometric schedule endpoints derived from the QUBO coefficients.

    Start: the largest possible single-flip move is accepted with
    probability 1/2. End: the smallest nonzero coefficient magnitude is
    accepted with probability 1/100.
    """
    abs_q = np.abs(matrix)
    diag = np.diag(abs_q)
    reach = diag + 2.0 * (abs_q.sum(axis=1) - diag)
    dmax = float(reach.max()) if reach.size else 0.0
    nonzero = abs_q[abs_q > 0]
    if dmax == 0.0 or nonzero.size == 0:
        return (0.1, 1.0)
    dmin = float(nonzero.min())
    beta_min = math.log(2.0) / dmax
    beta_max = math.log(100.0) / dmin
    if beta_max <= beta_min:
        beta_max = 2.0 * beta_min
    return (beta_min, beta_max)


def solve_sa(problem: QuboProblem, config: SaConfig) -> SampleSet:
    """Sample low-energy bit vectors by simulated annealing.

    Each read runs an independent Metropolis chain whose random stream
    depends only on (seed, read index), so results are reproducible and
    independent of internal batching. Returned energies are recomputed
    from the final states.
    """
    q = problem.matrix
    dim = problem.dim
    qdiag = np.diag(q).copy()
    lo, hi = config.beta_range if config.beta_range is not None else default_beta_range(q)
    betas = np.geomspace(lo, hi, config.sweeps)
    reads = config.reads

    rngs = [np.random.default_rng([config.seed, r]) for r in range(reads)]
    a = np.empty((reads, dim))
    for r, rng in enumerate(rngs):
        a[r] = rng.integers(0, 2, size=dim)
    fields = a @ q  # fields[r, k] = sum_j q[k, j] * a[r, j], q symmetric

    # uniforms are drawn per read in sweep-major order, blocked to bound memory
    block = max(1, min(config.sweeps, int(4_000_000 // max(1, reads * dim))))
    for s0 in range(0, config.sweeps, block):
        ns = min(block, config.sweeps - s0)
        u = np.empty((reads, ns, dim))
        for r, rng in enumerate(rngs):
            u[r] = rng.random((ns, dim))
        for t in range(ns):
            beta = betas[s0 + t]
            for k in range(dim):
                ak = a[:, k]
                move = 1.0 - 2.0 * ak
                delta = move * (qdiag[k] + 2.0 * (fields[:, k] - qdiag[k] * ak))
                accept = (delta <= 0.0) | (
                    u[:, t, k] < np.exp(-beta * np.maximum(delta, 0.0))
                )
                rows = np.nonzero(accept)[0]
                if rows.size:
                    a[rows, k] = 1.0 - a[rows, k]
                    fields[rows] += np.outer(move[rows], q[k])

    bits = a.astype(np.uint8)
    energies = np.einsum("rj,jk,rk->r", a, q, a)
    return _sorted_sample_set(bits, energies, config)


def solve_exact(problem: QuboProblem, limit: int | None = None) -> SampleSet:
    """Exhaustively rank all bit vectors of a small QUBO.

    Only feasible up to 24 bits; raises CapacityError beyond that. Returns
    the full ranking truncated to `limit` samples (all of them if None).
    """
    dim = problem.dim
    if dim > EXACT_MAX_BITS:
        raise CapacityError(
            f"exhaustive enumeration supports at most {EXACT_MAX_BITS} bits, got {dim}"
        )
    if limit is not None and limit < 1:
        raise InvalidInputError(f"limit must be >= 1, got {limit}")
    q = problem.matrix
    n_lo = dim // 2
    n_hi = dim - n_lo
    lo_bits = ((np.arange(1 << n_lo)[:, None] >> np.arange(n_lo)) & 1).astype(float)
    hi_bits = ((np.arange(1 << n_hi)[:, None] >> np.arange(n_hi)) & 1).astype(float)
    e_lo = np.einsum("ij,jk,ik->i", lo_bits, q[:n_lo, :n_lo], lo_bits)
    e_hi = np.einsum("ij,jk,ik->i", hi_bits, q[n_lo:, n_lo:], hi_bits)
    cross = hi_bits @ (2.0 * q[n_lo:, :n_lo])
    energies = (e_hi[:, None] + cross @ lo_bits.T + e_lo[None, :]).ravel()

    index = np.arange(1 << dim, dtype=np.int64)
    lex_key = np.zeros_like(index)
    for j in range(dim):
        lex_key |= ((index >> j) & 1) << (dim - 1 - j)
    order = np.lexsort((lex_key, energies))
    if limit is not None:
        order = order[:limit]
    best = ((order[:, None] >> np.arange(dim)) & 1).astype(np.uint8)
    return SampleSet(bits=best, energies=energies[order], config=None)


def average_low_energy(samples: SampleSet, k: int, encoding: Encoding) -> Array:
    """Mean of the decoded multiplier vectors of the k lowest-energy samples."""
    if not 1 <= k <= len(samples):
        raise InvalidInputError(f"k must be in [1, {len(samples)}], got {k}")
    if samples.bits.shape[1] % encoding.bits != 0:
        raise InvalidInputError(
            f"sample width {samples.bits.shape[1]} is not a multiple of bits={encoding.bits}"
        )
    weights = encoding.weights()
    groups = samples.bits[:k].astype(float).reshape(k, -1, encoding.bits)
    return (groups @ weights).mean(axis=0)


def minimize_encoded_exact(
    dual: DualProblem, encoding: Encoding, lam: float, max_combos: int = EXACT_MAX_COMBOS
) -> tuple[Array, float]:
    """Exact minimizer of the penalized dual over the encoded value grid.

    Enumerates all but the first multiplier over their 2^bits grid values
    and minimizes the first in closed form (a 1D quadratic over a uniform
    grid attains its minimum at the clipped floor/ceil of the vertex, or
    at an endpoint). Exact over the same search space as enumerating all
    2^(2*M*bits) bit vectors, but feasible far beyond 24 bits.
    """
    lam = float(lam)
    if not (math.isfinite(lam) and lam >= 0):
        raise InvalidInputError(f"lam must be a nonnegative real, got {lam!r}")
    n = dual.n_multipliers
    m = dual.n_samples
    n_vals = 1 << encoding.bits
    rest = n - 1
    combos = n_vals**rest
    if combos > max_combos:
        raise CapacityError(
            f"grid enumeration needs {combos} combinations, cap is {max_combos}"
        )
    scale = float(1 << encoding.frac_bits)
    grid = np.arange(n_vals, dtype=float) / scale
    sigma = np.concatenate([np.ones(m), -np.ones(m)])
    q = dual.q
    c = dual.c
    head_quad = 0.5 * q[0, 0] + lam
    vmax = n_vals - 1

    best_energy = math.inf
    best_combo = -1
    best_k0 = -1
    chunk = 1 << 20
    for start in range(0, combos, chunk):
        idx = np.arange(start, min(start + chunk, combos), dtype=np.int64)
        alphas_rest = np.empty((idx.shape[0], rest))
        digits = idx.copy()
        for j in range(rest):
            alphas_rest[:, j] = grid[digits % n_vals]
            digits //= n_vals
        balance_rest = alphas_rest @ sigma[1:]
        lin = alphas_rest @ q[0, 1:] + c[0] + 2.0 * lam * sigma[0] * balance_rest
        const = (
            0.5 * np.einsum("ij,jk,ik->i", alphas_rest, q[1:, 1:], alphas_rest)
            + alphas_rest @ c[1:]
            + lam * balance_rest**2
        )
        zeros = np.zeros_like(lin)
        if head_quad > 0:
            vertex = np.floor(-lin / (2.0 * head_quad) * scale)
            k_lo = np.clip(vertex, 0, vmax)
            k_hi = np.clip(vertex + 1, 0, vmax)
        else:
            k_lo = zeros
            k_hi = zeros
        cand = np.stack([zeros, np.full_like(lin, vmax), k_lo, k_hi], axis=1)
        g = cand / scale
        e = head_quad * g * g + lin[:, None] * g + const[:, None]
        e_min = e.min(axis=1)
        # idx increases within the chunk, so the first minimal row carries
        # the smallest combination index
        row = int(np.argmin(e_min))
        k_row = int(np.where(e[row] == e_min[row], cand[row], vmax + 1).min())
        key = (float(e_min[row]), int(idx[row]), k_row)
        if key < (best_energy, best_combo, best_k0):
            best_energy, best_combo, best_k0 = key

    alphas = np.empty(n)
    alphas[0] = best_k0 / scale
    digits = best_combo
    for j in range(rest):
        alphas[1 + j] = grid[digits % n_vals]
        digits //= n_vals
    return alphas, lagrangian(dual, lam, alphas)


@dataclass(frozen=True)
class BaselineResult:
    """Projected-gradient solve outcome for the constrained dual."""

    alphas: Array
    objective: float
    converged: bool
    n_iter: int
    history: Array = field(repr=False)


def project_box_balance(v, n_samples: int, bound: float) -> Array:
    """Euclidean projection onto {0 <= a <= bound, sum(plus) == sum(minus)}.

    The KKT system gives plus = clip(v_plus - theta), minus =
    clip(v_minus + theta) for a scalar theta; the balance gap is monotone
    nonincreasing in theta, so bisection finds it.
    """
    v = np.asarray(v, dtype=float)
    m = n_samples
    if v.shape != (2 * m,):
        raise InvalidInputError(f"v must have shape ({2*m},), got {v.shape}")
    if not bound > 0:
        raise InvalidInputError(f"bound must be positive, got {bound}")

    def balance(theta: float) -> float:
        plus = np.clip(v[:m] - theta, 0.0, bound)
        minus = np.clip(v[m:] + theta, 0.0, bound)
        return float(plus.sum() - minus.sum())

    span = float(np.abs(v).max(initial=0.0)) + bound + 1.0
    lo, hi = -span, span
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if balance(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return np.concatenate(
        [np.clip(v[:m] - theta, 0.0, bound), np.clip(v[m:] + theta, 0.0, bound)]
    )


def solve_dual_baseline(
    dual: DualProblem,
    bound: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> BaselineResult:
    """Projected gradient descent on the constrained dual.

    Fixed step 1/||q||_2 guarantees a monotone objective; iteration stops
    once the per-step improvement drops below tol (converged) or at
    max_iter (not converged).
    """
    if not bound > 0:
        raise InvalidInputError(f"bound must be positive, got {bound}")
    if not tol > 0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise InvalidInputError(f"max_iter must be >= 1, got {max_iter}")
    q = dual.q
    c = dual.c
    m = dual.n_samples
    eigs = np.linalg.eigvalsh(q)
    lipschitz = float(np.abs(eigs).max())
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    alphas = np.zeros(dual.n_multipliers)
    value = 0.0
    history = [value]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = q @ alphas + c
        candidate = project_box_balance(alphas - step * grad, m, bound)
        new_value = float(0.5 * candidate @ q @ candidate + c @ candidate)
        if new_value > value + 1e-9 * max(1.0, abs(value)):
            raise QuboSvrError(
                "projected gradient objective increased; step size derivation is broken"
            )
        improvement = value - new_value
        alphas, value = candidate, new_value
        history.append(value)
        if improvement < tol:
            converged = True
            break
    return BaselineResult(
        alphas=alphas,
        objective=value,
        converged=converged,
        n_iter=iterations,
        history=np.asarray(history),
    )
