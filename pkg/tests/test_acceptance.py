"""Acceptance suite: one test per release criterion.

Each test prints a single summary line on success; tolerances and time
budgets are stated inline next to the assertions they guard.
"""

import dataclasses
import hashlib
import json
import os
import time

import numpy as np
import pytest

from qubosvr import (
    Encoding,
    GaussianKernel,
    HyperParams,
    SaConfig,
    build_qubo,
    decode,
    detection_error,
    energy,
    estimate_offset,
    evaluate,
    failure_rate,
    lagrangian,
    lbp_features,
    mne,
    mnde,
    offset_bounds,
    preprocess,
    report_to_csv,
    errors_to_csv,
    solve_exact,
    solve_sa,
    train,
    train_landmark_models,
    run_cv,
    HyperGrid,
)
from qubosvr.cli import main

from conftest import (
    affine_feature_store,
    random_dual,
    random_kernel,
    random_training_set,
    write_image_dataset,
)


def test_criterion_1_qubo_energy_matches_lagrangian():
    """Binary energies equal the penalized dual objective of the decoding."""
    rng = np.random.default_rng(777)
    lams = (0.0, 1.0, 5.0, 10.0)
    t0 = time.monotonic()
    worst = 0.0
    for i in range(200):
        m = int(rng.integers(1, 5))
        bits = int(rng.integers(1, 5))
        frac_bits = int(rng.integers(0, bits))
        dual = random_dual(rng, m)
        problem = build_qubo(dual, Encoding(bits=bits, frac_bits=frac_bits), lams[i % 4])
        states = rng.integers(0, 2, size=(50, problem.dim))
        for a in states:
            e = energy(problem, a)
            l = lagrangian(dual, problem.lam, decode(a, problem.encoding))
            worst = max(worst, abs(e - l))
    elapsed = time.monotonic() - t0
    assert worst <= 1e-9
    assert elapsed < 10.0
    print(f"[criterion 1] PASS max |energy - lagrangian| = {worst:.2e} in {elapsed:.1f}s")


def test_criterion_2_annealer_attains_exact_minima():
    """SA at 1000 sweeps x 100 reads recovers the 12-bit global minimum."""
    template = build_qubo(random_dual(np.random.default_rng(0), 3), Encoding(bits=2), 1.0)
    assert template.dim == 12
    t0 = time.monotonic()
    hits = 0
    for k in range(100):
        rng = np.random.default_rng(5000 + k)
        raw = rng.normal(size=(12, 12))
        problem = dataclasses.replace(template, matrix=(raw + raw.T) / 2.0)
        ground = solve_exact(problem, limit=1).energies[0]
        sampled = solve_sa(
            problem, SaConfig(sweeps=1000, reads=100, keep_best=20, seed=k)
        ).energies[0]
        assert sampled >= ground - 1e-9
        if sampled - ground <= 1e-9:
            hits += 1
    elapsed = time.monotonic() - t0
    assert hits >= 95
    assert elapsed < 60.0
    print(f"[criterion 2] PASS {hits}/100 ground states in {elapsed:.1f}s")


def test_criterion_3_encoded_training_matches_baseline_up_to_precision():
    """Exact-QUBO and baseline training agree to the encoding precision.

    The balance penalty must actually bind: a weak penalty lets the
    binary minimizer trade constraint violation for objective value, in
    which case no precision bound can hold. lam=10 binds on all sets.
    """
    encoding = Encoding(bits=8, frac_bits=4)
    kernel = GaussianKernel(eta=4.0)
    tol = 4.0 * encoding.precision  # 4 * 2^-(frac_bits+1) = 0.125
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        ts = random_training_set(rng, 2)
        quantized = train(
            ts,
            HyperParams(kernel=kernel, epsilon=0.1, encoding=encoding, lam=10.0),
            method="exact",
        )
        continuous = train(
            ts,
            HyperParams(kernel=kernel, epsilon=0.1, box_bound=encoding.gamma),
            method="baseline",
            baseline_tol=1e-12,
        )
        gap = max(abs(quantized.predict(x) - continuous.predict(x)) for x in ts.xs)
        worst = max(worst, gap)
    assert worst <= tol
    print(f"[criterion 3] PASS max training-point gap {worst:.4f} <= {tol}")


def test_criterion_4_offset_estimate_lies_in_bounds():
    """estimate_offset never leaves the bracket on feasible multipliers."""
    rng = np.random.default_rng(31)
    checked = 0
    for _ in range(500):
        m = int(rng.integers(1, 6))
        ts = random_training_set(rng, m)
        kernel = random_kernel(rng)
        bound = float(rng.uniform(0.5, 4.0))
        alphas = rng.uniform(0.0, bound, size=2 * m)
        push = rng.random(2 * m)
        alphas[push < 0.2] = 0.0
        alphas[push > 0.8] = bound
        bounds = offset_bounds(alphas, ts, kernel, 0.1, bound)
        est = estimate_offset(bounds, alphas, bound)
        lo = min(bounds.lower, bounds.upper)
        hi = max(bounds.lower, bounds.upper)
        assert lo - 1e-9 <= est <= hi + 1e-9
        checked += 1
    assert checked == 500
    print("[criterion 4] PASS 500/500 offset estimates inside their bounds")


GOLDEN_FEATURES = {
    "gradient": "70c92b8f01408b36cd8943720c8e4ee06bbf50612104d0a7b54e83e1d2bc1740",
    "noise": "bc6f978634439db2b0495662e908f1d21d6ce5ccc7300435af505cca197625c8",
}


def test_criterion_5_feature_chain_checksums():
    """531-dim per-segment-normalized features with frozen checksums."""
    images = {
        "gradient": (np.add.outer(np.arange(90), np.arange(90)) % 256).astype(np.uint8),
        "noise": np.random.default_rng(2024).integers(0, 256, size=(90, 90), dtype=np.uint8),
    }
    for name, img in images.items():
        first = lbp_features(img)
        second = lbp_features(img.copy())
        assert first.shape == (531,)
        blocks = first.reshape(9, 59)
        assert np.all(np.abs(blocks.sum(axis=1) - 1.0) <= 1e-12)
        digest = hashlib.sha256(first.tobytes()).hexdigest()
        assert digest == GOLDEN_FEATURES[name]
        assert hashlib.sha256(second.tobytes()).hexdigest() == digest

    flat = lbp_features(np.full((90, 90), 128, dtype=np.uint8)).reshape(9, 59)
    for block in flat:
        assert block[57] == 1.0
        assert np.count_nonzero(block) == 1
    print("[criterion 5] PASS feature checksums stable; constant image is one-hot")


def test_criterion_6_metrics_hand_examples():
    """Error metrics reproduce small hand-computed cases exactly."""
    assert detection_error((1.0, 2.0), (1.0, 2.0), 5.0) == 0.0
    assert detection_error((0.0, 0.0), (3.0, 4.0), 10.0) == 0.5
    assert detection_error((0.0, 0.0), (21.0, 28.0), 70.0) == 0.5  # homogeneity

    assert mnde([0.05, 0.15]) == 0.10
    assert failure_rate([0.05, 0.15], 0.1) == 0.5  # 0.15 fails, 0.05 does not
    assert failure_rate([0.1, 0.1], 0.1) == 0.0  # strictly greater than
    assert mnde([0.0, 0.0, 0.0]) == 0.0
    assert failure_rate([0.0, 0.0, 0.0], 0.1) == 0.0

    assert mne([45.0], [45.0]) == 0.0
    assert mne([45.0, 45.0], [36.0, 54.0]) == 0.0  # signed residuals cancel
    assert mne([45.0, 45.0], [36.0, 36.0]) == 0.1
    print("[criterion 6] PASS metric hand examples exact; failure threshold strict")


def test_criterion_7_end_to_end_desk_scale():
    """Both training methods recover affine targets on a 12-image store."""
    t0 = time.monotonic()
    store = affine_feature_store()  # 12 images, 5 landmarks, 3 held out
    two_l = 2 * store.n_landmarks

    base_hp = HyperParams(kernel=GaussianKernel(eta=16.0), epsilon=0.1, box_bound=63.0)
    base = train_landmark_models(store, "baseline", [base_hp] * two_l, seed=11)
    base_mnde = evaluate(store, base, split="test").aggregate.mnde

    sa_hp = HyperParams(
        kernel=GaussianKernel(eta=16.0),
        epsilon=0.1,
        encoding=Encoding(bits=6),
        lam=5.0,
    )
    config = SaConfig(sweeps=200, reads=30, keep_best=10, seed=0)
    annealed = train_landmark_models(
        store, "annealing", [sa_hp] * two_l, seed=11, ensemble=3, sa_config=config
    )
    sa_mnde = evaluate(store, annealed, split="test").aggregate.mnde

    elapsed = time.monotonic() - t0
    assert base_mnde <= 0.05
    assert sa_mnde <= 0.05
    assert elapsed < 300.0
    print(
        f"[criterion 7] PASS held-out MNDE baseline {base_mnde:.4f}, "
        f"annealing {sa_mnde:.4f} in {elapsed:.1f}s"
    )


def test_criterion_8_report_layouts():
    """Evaluation emits the per-landmark summary and long-form error tables."""
    store = affine_feature_store(n_landmarks=2)
    hp = HyperParams(kernel=GaussianKernel(eta=16.0), epsilon=0.1, box_bound=63.0)
    bundle = train_landmark_models(store, "baseline", [hp] * 4, seed=1)
    report = evaluate(store, bundle, split="test")

    summary = report_to_csv(report).strip().splitlines()
    assert summary[0] == "landmark,mnde_pct,stddev,fr_pct,n"
    assert [row.split(",")[0] for row in summary[1:]] == ["1", "2", "all"]
    long_form = errors_to_csv(report).strip().splitlines()
    assert long_form[0] == "image,landmark,error"
    assert len(long_form) == 1 + report.errors.size
    print("[criterion 8] PASS summary and long-form report layouts emitted")


@pytest.mark.skipif(
    "QUBOSVR_DATASET" not in os.environ,
    reason=(
        "external face datasets are not shipped; point QUBOSVR_DATASET at a "
        "directory containing images/ and annotations.csv to run the "
        "full-scale comparison"
    ),
)
def test_criterion_8_supplied_dataset_reproduction():
    """On user-supplied data the annealed models track the baseline closely."""
    root = os.environ["QUBOSVR_DATASET"]
    store = preprocess(
        os.path.join(root, "images"), os.path.join(root, "annotations.csv"),
        seed=0, test_frac=0.2,
    )
    two_l = 2 * store.n_landmarks
    config = SaConfig(sweeps=300, reads=100, keep_best=20, seed=0)

    grid = HyperGrid()
    chosen = {}
    for method in ("baseline", "annealing"):
        results = run_cv(
            store, method, grid=grid, repeats=10, train_frac=0.1, seed=0,
            ensemble=5, sa_config=config,
        )
        chosen[method] = [r.best for r in results]

    base = train_landmark_models(store, "baseline", chosen["baseline"], seed=0)
    annealed = train_landmark_models(
        store, "annealing", chosen["annealing"], seed=0, ensemble=5, sa_config=config
    )
    base_report = evaluate(store, base, split="test")
    sa_report = evaluate(store, annealed, split="test")
    for report in (base_report, sa_report):
        lines = report_to_csv(report).strip().splitlines()
        assert lines[0] == "landmark,mnde_pct,stddev,fr_pct,n"
        assert lines[-1].startswith("all,")
    gap = abs(sa_report.aggregate.mnde - base_report.aggregate.mnde)
    assert gap <= 0.015  # within 1.5 percentage points
    print(
        f"[criterion 8] PASS supplied-data MNDE gap {100 * gap:.2f} pp "
        f"(baseline {100 * base_report.aggregate.mnde:.2f}%, "
        f"annealing {100 * sa_report.aggregate.mnde:.2f}%)"
    )


def run_cli_chain(images, annotations):
    """One full command-line pass; artifacts land under the working directory.

    Paths are relative so two runs from different roots see identical
    flag values, which is what the determinism contract quantifies over.
    """
    sa_flags = ["--sweeps", "15", "--reads", "4", "--keep-best", "2", "--ensemble", "1"]
    steps = [
        ["preprocess", "--images", images, "--annotations", annotations,
         "--out", "store", "--seed", "5", "--test-frac", "0.25"],
        ["cv", "--store", "store", "--method", "baseline", "--out", "cv",
         "--seed", "9", "--repeats", "2", "--train-frac", "0.5",
         "--grid-eta", "4,16", "--grid-gamma", "63"],
        ["train", "--store", "store", "--method", "baseline",
         "--selection", "cv/selection.json",
         "--out", "models-base", "--seed", "6"],
        ["train", "--store", "store", "--method", "annealing", "--eta", "16",
         "--bits", "2", "--lambda", "5", "--out", "models-sa", "--seed", "6",
         *sa_flags],
        ["eval", "--store", "store", "--models", "models-base",
         "--out", "report-base"],
        ["eval", "--store", "store", "--models", "models-sa",
         "--out", "report-sa"],
        ["qubo-dump", "--store", "store", "--ell", "0", "--eta", "4",
         "--bits", "2", "--out-file", "qubo.txt"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv[0]


def test_criterion_9_commands_are_byte_deterministic(tmp_path, monkeypatch):
    """Re-running every command with identical flags reproduces each byte."""
    dataset_root = tmp_path / "data"
    dataset_root.mkdir()
    images, annotations = write_image_dataset(dataset_root, n_images=6, n_landmarks=2, seed=3)

    runs = []
    for tag in ("first", "second"):
        out_root = tmp_path / tag
        out_root.mkdir()
        monkeypatch.chdir(out_root)
        run_cli_chain(str(images), str(annotations))
        listing = {}
        for cur, _dirs, files in os.walk(out_root):
            for name in files:
                path = os.path.join(cur, name)
                listing[os.path.relpath(path, out_root)] = open(path, "rb").read()
        runs.append(listing)

    assert sorted(runs[0]) == sorted(runs[1])
    for rel in sorted(runs[0]):
        assert runs[0][rel] == runs[1][rel], rel
    print(f"[criterion 9] PASS {len(runs[0])} artifacts byte-identical across reruns")
