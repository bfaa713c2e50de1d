"""Annealer, exhaustive enumeration, grid minimizer, and the classical
projected-gradient baseline."""

import math

import numpy as np
import pytest

from qubosvr import (
    CapacityError,
    Encoding,
    InvalidInputError,
    LinearKernel,
    SaConfig,
    SampleSet,
    TrainingSet,
    average_low_energy,
    build_dual,
    build_qubo,
    decode,
    default_beta_range,
    energy,
    lagrangian,
    minimize_encoded_exact,
    project_box_balance,
    solve_dual_baseline,
    solve_exact,
    solve_sa,
)

from conftest import random_dual


def one_bit_problem():
    train = TrainingSet(xs=np.array([[1.0]]), ys=np.array([0.0]))
    dual = build_dual(train, LinearKernel(), 0.1)
    return build_qubo(dual, Encoding(bits=1), lam=1.0)


def random_problem(rng, n_samples=2, bits=2, lam=None):
    dual = random_dual(rng, n_samples)
    if lam is None:
        lam = float(rng.uniform(0.0, 5.0))
    return build_qubo(dual, Encoding(bits=bits), lam)


def random_feasible(rng, n_samples, bound):
    """Random point in the box with balanced block sums."""
    v = rng.uniform(0.0, bound, size=2 * n_samples)
    s_plus = v[:n_samples].sum()
    s_minus = v[n_samples:].sum()
    target = min(s_plus, s_minus)
    if s_plus > 0:
        v[:n_samples] *= target / s_plus
    if s_minus > 0:
        v[n_samples:] *= target / s_minus
    return v


def dual_objective(dual, alphas):
    return float(0.5 * alphas @ dual.q @ alphas + dual.c @ alphas)


# --- configuration -----------------------------------------------------


def test_sa_config_validation():
    with pytest.raises(InvalidInputError):
        SaConfig(sweeps=0)
    with pytest.raises(InvalidInputError):
        SaConfig(reads=0)
    with pytest.raises(InvalidInputError):
        SaConfig(keep_best=0)
    with pytest.raises(InvalidInputError):
        SaConfig(reads=5, keep_best=6)
    with pytest.raises(InvalidInputError):
        SaConfig(beta_range=(0.0, 1.0))
    with pytest.raises(InvalidInputError):
        SaConfig(beta_range=(2.0, 1.0))


def test_default_beta_range_from_coefficients():
    lo, hi = default_beta_range(np.array([[1.6, -1.5], [-1.5, 1.6]]))
    # largest single-flip reach: 1.6 + 2 * 1.5; smallest nonzero entry: 1.5
    assert abs(lo - math.log(2.0) / 4.6) < 1e-15
    assert abs(hi - math.log(100.0) / 1.5) < 1e-15


def test_default_beta_range_degenerate_matrix():
    lo, hi = default_beta_range(np.zeros((3, 3)))
    assert 0 < lo <= hi


# --- exhaustive enumeration --------------------------------------------


def test_exact_ranking_one_sample_one_bit():
    samples = solve_exact(one_bit_problem())
    assert np.array_equal(
        samples.bits, np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=np.uint8)
    )
    assert np.allclose(samples.energies, [0.0, 0.2, 1.6, 1.6], atol=1e-12)
    best_bits, best_energy = samples.best
    assert np.array_equal(best_bits, [0, 0]) and best_energy == 0.0


def test_exact_matches_brute_force(rng):
    for _ in range(5):
        problem = random_problem(rng, n_samples=2, bits=2)  # 8 bits
        samples = solve_exact(problem)
        assert len(samples) == 256
        brute = sorted(
            (energy(problem, [(s >> i) & 1 for i in range(8)]), s) for s in range(256)
        )
        assert np.allclose(samples.energies, [e for e, _ in brute], atol=1e-12)
        # energies attached to rows are consistent with the rows themselves
        for row in range(0, 256, 37):
            assert abs(energy(problem, samples.bits[row]) - samples.energies[row]) < 1e-12


def test_exact_limit_truncates_prefix(rng):
    problem = random_problem(rng, n_samples=1, bits=3)
    full = solve_exact(problem)
    head = solve_exact(problem, limit=5)
    assert len(head) == 5
    assert np.array_equal(head.bits, full.bits[:5])
    assert np.array_equal(head.energies, full.energies[:5])


def test_exact_ties_resolve_in_bit_order(rng):
    # a zero matrix makes every state tie at zero energy
    problem = random_problem(rng, n_samples=1, bits=1, lam=0.0)
    flat = build_qubo(problem.dual, Encoding(bits=1), lam=0.0)
    zeroed = type(flat)(
        matrix=np.zeros_like(flat.matrix), encoding=flat.encoding, lam=0.0, dual=flat.dual
    )
    samples = solve_exact(zeroed)
    assert np.array_equal(
        samples.bits, np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
    )


def test_exact_capacity_limit(rng):
    dual = random_dual(rng, 13)  # 26 bits at one bit per multiplier
    problem = build_qubo(dual, Encoding(bits=1), lam=1.0)
    with pytest.raises(CapacityError):
        solve_exact(problem)


# --- simulated annealing ------------------------------------------------


def test_sa_is_deterministic(rng):
    problem = random_problem(rng)
    config = SaConfig(sweeps=50, reads=8, keep_best=4, seed=99)
    first = solve_sa(problem, config)
    second = solve_sa(problem, config)
    assert np.array_equal(first.bits, second.bits)
    assert np.array_equal(first.energies, second.energies)
    assert first.config == config


def test_sa_seed_changes_samples(rng):
    problem = random_problem(rng)
    a = solve_sa(problem, SaConfig(sweeps=1, reads=20, keep_best=1, seed=0))
    b = solve_sa(problem, SaConfig(sweeps=1, reads=20, keep_best=1, seed=1))
    assert not np.array_equal(a.bits, b.bits)


def test_sa_energies_match_bits_and_are_sorted(rng):
    problem = random_problem(rng, n_samples=3, bits=2)
    samples = solve_sa(problem, SaConfig(sweeps=30, reads=16, keep_best=4, seed=5))
    assert samples.bits.shape == (16, problem.dim)
    assert samples.bits.dtype == np.uint8
    assert np.all(np.diff(samples.energies) >= 0)
    for row in range(16):
        assert abs(energy(problem, samples.bits[row]) - samples.energies[row]) <= 1e-9


def test_sa_reads_use_independent_streams(rng):
    """Adding reads must not change what earlier reads produced."""
    problem = random_problem(rng)
    small = solve_sa(problem, SaConfig(sweeps=20, reads=1, keep_best=1, seed=7))
    large = solve_sa(problem, SaConfig(sweeps=20, reads=3, keep_best=1, seed=7))
    row = small.bits[0]
    assert any(np.array_equal(row, large.bits[r]) for r in range(3))


def test_sa_respects_explicit_beta_range(rng):
    problem = random_problem(rng)
    config = SaConfig(sweeps=40, reads=4, keep_best=1, seed=3, beta_range=(0.5, 20.0))
    samples = solve_sa(problem, config)
    assert len(samples) == 4


def test_sa_single_bit_problem():
    train = TrainingSet(xs=np.array([[1.0]]), ys=np.array([2.0]))
    dual = build_dual(train, LinearKernel(), 0.1)
    problem = build_qubo(dual, Encoding(bits=1), lam=0.0)
    samples = solve_sa(problem, SaConfig(sweeps=10, reads=4, keep_best=1, seed=1))
    assert samples.bits.shape == (4, 2)


def test_sa_finds_small_optima(rng):
    # penalty-heavy instances have isolated basins, so success scales with
    # reads; 100 reads leaves comfortable margin at 8 bits
    hits = 0
    for trial in range(20):
        problem = random_problem(rng, n_samples=2, bits=2)  # 8 bits
        exact = solve_exact(problem, limit=1)
        config = SaConfig(sweeps=300, reads=100, keep_best=1, seed=trial)
        got = solve_sa(problem, config).best[1]
        hits += abs(got - exact.best[1]) <= 1e-9
    assert hits >= 19


# --- low-energy averaging ----------------------------------------------


def test_average_low_energy_means_decoded_samples():
    bits = np.array([[1, 0, 0, 1], [1, 1, 0, 0], [0, 0, 1, 1]], dtype=np.uint8)
    samples = SampleSet(bits=bits, energies=np.array([1.0, 2.0, 3.0]))
    enc = Encoding(bits=2)
    # decoded rows: (1, 2), (3, 0), (0, 3)
    assert np.allclose(average_low_energy(samples, 2, enc), [2.0, 1.0])
    assert np.allclose(average_low_energy(samples, 3, enc), [4.0 / 3.0, 5.0 / 3.0])


def test_average_low_energy_validates_inputs():
    samples = SampleSet(bits=np.zeros((2, 4), dtype=np.uint8), energies=np.zeros(2))
    with pytest.raises(InvalidInputError):
        average_low_energy(samples, 0, Encoding(bits=2))
    with pytest.raises(InvalidInputError):
        average_low_energy(samples, 3, Encoding(bits=2))
    with pytest.raises(InvalidInputError):
        average_low_energy(samples, 1, Encoding(bits=3))


# --- exact grid minimization -------------------------------------------


def test_grid_minimum_matches_enumeration(rng):
    for _ in range(12):
        m = int(rng.integers(1, 3))
        bits = int(rng.integers(1, 4))
        dual = random_dual(rng, m)
        lam = float(rng.choice([0.0, 1.0, 5.0]))
        enc = Encoding(bits=bits)
        problem = build_qubo(dual, enc, lam)
        exact = solve_exact(problem, limit=1)
        alphas, value = minimize_encoded_exact(dual, enc, lam)
        assert abs(value - exact.best[1]) <= 1e-9
        assert abs(lagrangian(dual, lam, alphas) - value) <= 1e-12


def test_grid_minimum_with_fractional_bits(rng):
    dual = random_dual(rng, 2)
    enc = Encoding(bits=3, frac_bits=2)
    problem = build_qubo(dual, enc, lam=2.0)
    exact = solve_exact(problem, limit=1)
    alphas, value = minimize_encoded_exact(dual, enc, 2.0)
    assert abs(value - exact.best[1]) <= 1e-9
    assert np.allclose(alphas, decode(exact.bits[0], enc), atol=1e-12)


def test_grid_minimum_capacity_limit(rng):
    dual = random_dual(rng, 3)
    with pytest.raises(CapacityError):
        minimize_encoded_exact(dual, Encoding(bits=6), lam=1.0)


def test_grid_values_lie_on_the_grid(rng):
    dual = random_dual(rng, 2)
    enc = Encoding(bits=4, frac_bits=2)
    alphas, _ = minimize_encoded_exact(dual, enc, 1.0)
    steps = alphas * (1 << enc.frac_bits)
    assert np.allclose(steps, np.round(steps), atol=1e-12)
    assert np.all(alphas >= 0) and np.all(alphas <= enc.gamma)


# --- projection and the classical baseline ------------------------------


def test_projection_returns_feasible_points(rng):
    for _ in range(40):
        m = int(rng.integers(1, 6))
        bound = float(rng.uniform(0.5, 4.0))
        v = rng.normal(scale=3.0, size=2 * m)
        p = project_box_balance(v, m, bound)
        assert np.all(p >= -1e-12) and np.all(p <= bound + 1e-12)
        assert abs(p[:m].sum() - p[m:].sum()) <= 1e-8


def test_projection_fixes_feasible_points(rng):
    for _ in range(20):
        m = int(rng.integers(1, 5))
        bound = 2.0
        z = random_feasible(rng, m, bound)
        assert np.allclose(project_box_balance(z, m, bound), z, atol=1e-9)


def test_projection_is_nearest_feasible_point(rng):
    for _ in range(10):
        m = 3
        bound = 1.5
        v = rng.normal(scale=2.0, size=2 * m)
        p = project_box_balance(v, m, bound)
        d_p = np.linalg.norm(v - p)
        for _ in range(50):
            z = random_feasible(rng, m, bound)
            assert d_p <= np.linalg.norm(v - z) + 1e-8


def test_baseline_solves_in_tube_data_to_zero(rng):
    # all targets inside the epsilon tube: the zero function is optimal
    xs = rng.normal(size=(4, 2))
    ys = 0.05 * rng.uniform(-1, 1, size=4)
    dual = build_dual(TrainingSet(xs=xs, ys=ys), LinearKernel(), 0.5)
    result = solve_dual_baseline(dual, bound=3.0)
    assert result.converged
    assert np.allclose(result.alphas, 0.0, atol=1e-9)
    assert abs(result.objective) <= 1e-12


def test_baseline_objective_is_monotone(rng):
    dual = random_dual(rng, 5)
    result = solve_dual_baseline(dual, bound=2.0)
    assert np.all(np.diff(result.history) <= 1e-9)
    assert result.history[-1] == result.objective
    assert result.n_iter == len(result.history) - 1


def test_baseline_result_is_feasible(rng):
    for _ in range(5):
        dual = random_dual(rng, 4)
        result = solve_dual_baseline(dual, bound=1.0)
        a = result.alphas
        assert np.all(a >= -1e-10) and np.all(a <= 1.0 + 1e-10)
        assert abs(a[:4].sum() - a[4:].sum()) <= 1e-7


def test_baseline_beats_random_feasible_points(rng):
    for _ in range(5):
        dual = random_dual(rng, 4)
        result = solve_dual_baseline(dual, bound=2.0)
        for _ in range(100):
            z = random_feasible(rng, 4, 2.0)
            assert result.objective <= dual_objective(dual, z) + 1e-7


def test_baseline_iteration_budget(rng):
    dual = random_dual(rng, 4)
    result = solve_dual_baseline(dual, bound=2.0, max_iter=2)
    assert result.n_iter <= 2
