"""Facial-landmark detection workflow built on the SVR core.

A labeled image set becomes a feature store: per-image 531-dim LBP
features, landmark targets scaled into the normalized 90x90 frame, and a
seeded model/test split. Each landmark coordinate is one regression
sub-task (2L of them): Pearson feature selection on the model split,
Monte-Carlo cross-validation over a hyperparameter grid, final training
on the whole model split, and evaluation by normalized detection error.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .data import TrainingSet
from .errors import InvalidInputError, ParseError
from .features import (
    N_FEATURES,
    NORMALIZED_SIDE,
    SelectionResult,
    crop_resize,
    floored_box,
    lbp_features,
    pearson_select,
    read_annotations,
    read_netpbm,
    rescale_coord,
    scale_coord,
    to_gray,
)
from .kernels import GaussianKernel
from .qubo import Encoding
from .solvers import SaConfig
from .svr import (
    METHOD_ANNEALING,
    METHOD_BASELINE,
    METHOD_EXACT,
    METHODS,
    HyperParams,
    SvrModel,
    _derive_seed,
    load_model,
    save_model,
    train,
)

Array = np.ndarray

STORE_FORMAT_VERSION = 1
MODELS_FORMAT_VERSION = 1
SELECTION_FORMAT_VERSION = 1

MAX_SELECTED_FEATURES = 9

_TAG_SPLIT = 1
_TAG_MCCV = 2
_TAG_CV_SUBTASK = 3
_TAG_TRAIN = 4


# --- error metrics ----------------------------------------------------------

def detection_error(true_xy, pred_xy, d: float) -> float:
    """Euclidean landmark error normalized by the face size d."""
    if not d > 0:
        raise InvalidInputError(f"normalizer d must be positive, got {d}")
    t = np.asarray(true_xy, dtype=float)
    p = np.asarray(pred_xy, dtype=float)
    if t.shape != (2,) or p.shape != (2,):
        raise InvalidInputError("detection_error expects two (x, y) points")
    return float(np.hypot(t[0] - p[0], t[1] - p[1])) / d


def mnde(errors) -> float:
    """Mean normalized detection error."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise InvalidInputError("mnde of an empty error set")
    return float(e.mean())


def failure_rate(errors, e_th: float = 0.1) -> float:
    """Fraction of errors strictly above the threshold."""
    if not e_th > 0:
        raise InvalidInputError(f"e_th must be positive, got {e_th}")
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise InvalidInputError("failure rate of an empty error set")
    return float((e > e_th).mean())


def mne(true_vals, pred_vals, side: float = float(NORMALIZED_SIDE)) -> float:
    """Signed mean normalized error of one coordinate, (true - pred) / side."""
    t = np.asarray(true_vals, dtype=float).ravel()
    p = np.asarray(pred_vals, dtype=float).ravel()
    if t.size == 0 or t.shape != p.shape:
        raise InvalidInputError("mne expects matching nonempty value arrays")
    return float(((t - p) / side).mean())


# --- feature store ----------------------------------------------------------

@dataclass(frozen=True)
class FeatureStore:
    """Preprocessed dataset: features, scaled targets, split, geometry."""

    names: tuple[str, ...]
    features: Array  # (N, 531)
    targets: Array  # (N, 2L), scaled into the normalized frame
    shapes: Array  # (N, 2L), raw image coordinates
    boxes: Array  # (N, 4) int, floored face boxes
    is_test: Array  # (N,) bool
    seed: int
    test_frac: float

    def __post_init__(self):
        n = len(self.names)
        if self.features.shape != (n, N_FEATURES):
            raise InvalidInputError(
                f"features must be ({n}, {N_FEATURES}), got {self.features.shape}"
            )
        if self.targets.shape != self.shapes.shape or self.targets.shape[0] != n:
            raise InvalidInputError("targets/shapes must be (N, 2L)")
        if self.boxes.shape != (n, 4) or self.is_test.shape != (n,):
            raise InvalidInputError("boxes must be (N, 4) and is_test (N,)")

    @property
    def n_images(self) -> int:
        return len(self.names)

    @property
    def n_landmarks(self) -> int:
        return self.targets.shape[1] // 2

    @property
    def model_rows(self) -> Array:
        return np.nonzero(~self.is_test)[0]

    @property
    def test_rows(self) -> Array:
        return np.nonzero(self.is_test)[0]


def preprocess(images_dir: str | os.PathLike, annotations_path: str | os.PathLike,
               seed: int = 0, test_frac: float = 0.2) -> FeatureStore:
    """Build a feature store from images and their annotation CSV.

    Every netpbm image in the directory must have an annotation row and
    vice versa. Rows keep the CSV order; the test split is drawn by
    seeded permutation.
    """
    if not 0 <= test_frac < 1:
        raise InvalidInputError(f"test_frac must be in [0, 1), got {test_frac}")
    annotations = read_annotations(annotations_path)
    images_dir = os.fspath(images_dir)
    on_disk = {
        f for f in os.listdir(images_dir) if f.lower().endswith((".pgm", ".ppm"))
    }
    annotated = {ann.image for ann in annotations}
    missing_files = sorted(annotated - on_disk)
    if missing_files:
        raise ParseError(
            f"{annotations_path}: annotated images missing from {images_dir}: "
            + ", ".join(missing_files)
        )
    missing_rows = sorted(on_disk - annotated)
    if missing_rows:
        raise ParseError(
            f"{annotations_path}: images without an annotation row: "
            + ", ".join(missing_rows)
        )

    n_landmarks = annotations[0].n_landmarks
    names = []
    feats = []
    targets = []
    shapes = []
    boxes = []
    for ann in annotations:
        gray = to_gray(read_netpbm(os.path.join(images_dir, ann.image)))
        x1, y1, x2, y2 = floored_box(ann.box)
        normalized = crop_resize(gray, ann.box)
        feats.append(lbp_features(normalized))
        scaled = np.empty(2 * n_landmarks)
        for k in range(n_landmarks):
            scaled[2 * k] = scale_coord(ann.shape[2 * k], x1, x2 - x1)
            scaled[2 * k + 1] = scale_coord(ann.shape[2 * k + 1], y1, y2 - y1)
        names.append(ann.image)
        targets.append(scaled)
        shapes.append(ann.shape)
        boxes.append((x1, y1, x2, y2))

    n = len(names)
    n_test = int(round(test_frac * n))
    if n - n_test < 1:
        raise InvalidInputError(f"test_frac {test_frac} leaves no model rows for n={n}")
    order = np.random.default_rng([seed, _TAG_SPLIT]).permutation(n)
    is_test = np.zeros(n, dtype=bool)
    is_test[order[:n_test]] = True
    return FeatureStore(
        names=tuple(names),
        features=np.asarray(feats),
        targets=np.asarray(targets),
        shapes=np.asarray(shapes),
        boxes=np.asarray(boxes, dtype=int),
        is_test=is_test,
        seed=seed,
        test_frac=test_frac,
    )


def _write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def save_store(store: FeatureStore, out_dir: str | os.PathLike) -> None:
    """Write the store as diffable CSV/JSON artifacts."""
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    two_l = 2 * store.n_landmarks

    header = ["image"] + [f"f{j:03d}" for j in range(N_FEATURES)]
    rows = [
        [store.names[i]] + [repr(float(v)) for v in store.features[i]]
        for i in range(store.n_images)
    ]
    _write_csv(os.path.join(out, "features.csv"), header, rows)

    header = ["image"] + [f"t{j}" for j in range(two_l)]
    rows = [
        [store.names[i]] + [repr(float(v)) for v in store.targets[i]]
        for i in range(store.n_images)
    ]
    _write_csv(os.path.join(out, "targets.csv"), header, rows)

    header = (
        ["image", "split", "bx1", "by1", "bx2", "by2"]
        + [f"l{j}" for j in range(two_l)]
    )
    rows = []
    for i in range(store.n_images):
        rows.append(
            [store.names[i], "test" if store.is_test[i] else "model"]
            + [str(int(v)) for v in store.boxes[i]]
            + [repr(float(v)) for v in store.shapes[i]]
        )
    _write_csv(os.path.join(out, "manifest.csv"), header, rows)

    meta = {
        "format_version": STORE_FORMAT_VERSION,
        "n_images": store.n_images,
        "n_landmarks": store.n_landmarks,
        "feature_dim": N_FEATURES,
        "seed": store.seed,
        "test_frac": store.test_frac,
    }
    with open(os.path.join(out, "store.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: line 1: empty file")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: line {i}: expected {len(header)} cells, got {len(row)}")
    return header, rows


def load_store(store_dir: str | os.PathLike) -> FeatureStore:
    base = os.fspath(store_dir)
    meta_path = os.path.join(base, "store.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from None
    if meta.get("format_version") != STORE_FORMAT_VERSION:
        raise ParseError(f"{meta_path}: unsupported store format {meta.get('format_version')!r}")
    two_l = 2 * int(meta["n_landmarks"])

    fpath = os.path.join(base, "features.csv")
    fheader, frows = _read_csv(fpath)
    if len(fheader) != N_FEATURES + 1:
        raise ParseError(f"{fpath}: line 1: expected {N_FEATURES + 1} columns")
    names = [r[0] for r in frows]

    def floats(path, rows, start):
        try:
            return np.asarray([[float(c) for c in r[start:]] for r in rows])
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from None

    features = floats(fpath, frows, 1)

    tpath = os.path.join(base, "targets.csv")
    theader, trows = _read_csv(tpath)
    if [r[0] for r in trows] != names or len(theader) != two_l + 1:
        raise ParseError(f"{tpath}: rows do not match features.csv")
    targets = floats(tpath, trows, 1)

    mpath = os.path.join(base, "manifest.csv")
    mheader, mrows = _read_csv(mpath)
    if [r[0] for r in mrows] != names or len(mheader) != 6 + two_l:
        raise ParseError(f"{mpath}: rows do not match features.csv")
    splits = [r[1] for r in mrows]
    bad = {s for s in splits if s not in ("model", "test")}
    if bad:
        raise ParseError(f"{mpath}: unknown split tags {sorted(bad)}")
    boxes = floats(mpath, mrows, 2)[:, :4].astype(int)
    shapes = floats(mpath, mrows, 6)
    return FeatureStore(
        names=tuple(names),
        features=features,
        targets=targets,
        shapes=shapes,
        boxes=boxes,
        is_test=np.asarray([s == "test" for s in splits]),
        seed=int(meta["seed"]),
        test_frac=float(meta["test_frac"]),
    )


# --- sub-tasks and hyperparameter grids --------------------------------------

@dataclass(frozen=True)
class SubTaskDataset:
    """One landmark coordinate's regression problem on the model split."""

    ell: int
    selection: SelectionResult
    model: TrainingSet


def build_subtask(store: FeatureStore, ell: int, n_features: int = 6) -> SubTaskDataset:
    """Select features and assemble the training set for coordinate ell.

    Selection sees only the model split; its row_ids record that split
    so any leakage (recomputation over different rows) is observable.
    """
    if not 0 <= ell < 2 * store.n_landmarks:
        raise InvalidInputError(f"ell must be in [0, {2 * store.n_landmarks}), got {ell}")
    if not 1 <= n_features <= MAX_SELECTED_FEATURES:
        raise InvalidInputError(
            f"n_features must be in [1, {MAX_SELECTED_FEATURES}], got {n_features}"
        )
    rows = store.model_rows
    selection = pearson_select(
        store.features[rows], store.targets[rows, ell], n_features, row_ids=rows
    )
    model = TrainingSet(
        xs=store.features[np.ix_(rows, selection.indices)],
        ys=store.targets[rows, ell],
    )
    return SubTaskDataset(ell=ell, selection=selection, model=model)


@dataclass(frozen=True)
class HyperGrid:
    """Hyperparameter grid for model selection.

    The baseline grid crosses box bounds with kernel widths (12 tuples by
    default); the annealing/exact grid crosses encoding widths, kernel
    widths and penalty weights (36 tuples). Enumeration order is the
    declaration order of the axes, and ties in model selection resolve to
    the earlier tuple.
    """

    etas: tuple = (4.0, 16.0, 64.0, 256.0)
    box_bounds: tuple = (15.0, 31.0, 63.0)
    bits: tuple = (4, 5, 6)
    frac_bits: int = 0
    lams: tuple = (1.0, 5.0, 10.0)
    epsilon: float = 0.1

    def tuples(self, method: str) -> list[HyperParams]:
        if method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}, got {method!r}")
        out = []
        if method == METHOD_BASELINE:
            for bound in self.box_bounds:
                for eta in self.etas:
                    out.append(
                        HyperParams(
                            kernel=GaussianKernel(eta=float(eta)),
                            epsilon=self.epsilon,
                            box_bound=float(bound),
                        )
                    )
        else:
            for bits in self.bits:
                for eta in self.etas:
                    for lam in self.lams:
                        out.append(
                            HyperParams(
                                kernel=GaussianKernel(eta=float(eta)),
                                epsilon=self.epsilon,
                                encoding=Encoding(bits=int(bits), frac_bits=self.frac_bits),
                                lam=float(lam),
                            )
                        )
        return out


def hyperparams_to_dict(hp: HyperParams) -> dict:
    if not isinstance(hp.kernel, GaussianKernel):
        raise InvalidInputError("pipeline grids use Gaussian kernels")
    d = {"eta": float(hp.kernel.eta), "epsilon": float(hp.epsilon)}
    if hp.encoding is not None:
        d["bits"] = int(hp.encoding.bits)
        d["frac_bits"] = int(hp.encoding.frac_bits)
        d["lambda"] = float(hp.lam)
        d["gamma"] = hp.encoding.gamma
    else:
        d["gamma"] = float(hp.box_bound)
    return d


def hyperparams_from_dict(d: dict) -> HyperParams:
    try:
        kernel = GaussianKernel(eta=float(d["eta"]))
        if "bits" in d:
            return HyperParams(
                kernel=kernel,
                epsilon=float(d["epsilon"]),
                encoding=Encoding(bits=int(d["bits"]), frac_bits=int(d.get("frac_bits", 0))),
                lam=float(d.get("lambda", 1.0)),
            )
        return HyperParams(
            kernel=kernel, epsilon=float(d["epsilon"]), box_bound=float(d["gamma"])
        )
    except KeyError as exc:
        raise InvalidInputError(f"hyperparameter dict is missing key {exc}") from None


# --- Monte-Carlo cross-validation ---------------------------------------------

@dataclass(frozen=True)
class CvResult:
    """Scores of every grid tuple on one sub-task."""

    ell: int
    params: tuple[HyperParams, ...]
    scores: Array  # (n_tuples,) mean score, lower is better
    best_index: int

    @property
    def best(self) -> HyperParams:
        return self.params[self.best_index]


def mccv(
    subtask: SubTaskDataset,
    params: list[HyperParams],
    method: str,
    repeats: int = 50,
    train_frac: float = 0.10,
    seed: int = 0,
    ensemble: int = 20,
    sa_config: SaConfig | None = None,
    score: str = "abs",
    baseline_tol: float = 1e-10,
    baseline_max_iter: int = 10000,
) -> CvResult:
    """Monte-Carlo cross-validation over a hyperparameter list.

    Each repeat draws train_frac of the model split (without replacement)
    for training and scores the rest by mean normalized error (|MNE| by
    default, the signed value with score="signed"). The resample splits
    depend only on (seed, repeat), never on the tuple, so permuting the
    grid cannot change any tuple's score. Ties resolve to the earliest
    tuple.
    """
    if method not in METHODS:
        raise InvalidInputError(f"method must be one of {METHODS}, got {method!r}")
    if score not in ("abs", "signed"):
        raise InvalidInputError(f"score must be 'abs' or 'signed', got {score!r}")
    if repeats < 1:
        raise InvalidInputError(f"repeats must be >= 1, got {repeats}")
    if not params:
        raise InvalidInputError("empty hyperparameter list")
    n = subtask.model.n_samples
    n_train = int(round(train_frac * n))
    if n_train < 2 or n_train >= n:
        raise InvalidInputError(
            f"train_frac {train_frac} of {n} rows gives {n_train} training rows; "
            "need at least 2 and at least 1 for validation"
        )
    splits = []
    for r in range(repeats):
        order = np.random.default_rng([seed, _TAG_MCCV, r]).permutation(n)
        splits.append((order[:n_train], order[n_train:]))

    base_config = sa_config if sa_config is not None else SaConfig()
    scores = np.zeros(len(params))
    for t, hp in enumerate(params):
        values = np.empty(repeats)
        for r, (train_rows, val_rows) in enumerate(splits):
            subset = TrainingSet(
                xs=subtask.model.xs[train_rows], ys=subtask.model.ys[train_rows]
            )
            model = train(
                subset,
                hp,
                method=method,
                ensemble=ensemble,
                sa_config=replace(base_config, seed=_derive_seed(seed, _TAG_MCCV, r)),
                baseline_tol=baseline_tol,
                baseline_max_iter=baseline_max_iter,
            )
            preds = model.predict_batch(subtask.model.xs[val_rows])
            signed = mne(subtask.model.ys[val_rows], preds)
            values[r] = abs(signed) if score == "abs" else signed
        scores[t] = values.mean()
    best_index = int(np.argmin(scores))
    return CvResult(
        ell=subtask.ell, params=tuple(params), scores=scores, best_index=best_index
    )


# --- landmark model bundles ---------------------------------------------------

@dataclass(frozen=True)
class LandmarkModels:
    """One trained model per landmark coordinate, with its selection."""

    method: str
    n_features: int
    seed: int
    models: tuple[SvrModel, ...]
    selections: tuple[SelectionResult, ...]
    info: dict = field(default_factory=dict)

    @property
    def n_landmarks(self) -> int:
        return len(self.models) // 2


def run_cv(
    store: FeatureStore,
    method: str,
    n_features: int = 6,
    grid: HyperGrid | None = None,
    repeats: int = 50,
    train_frac: float = 0.10,
    seed: int = 0,
    ensemble: int = 20,
    sa_config: SaConfig | None = None,
    score: str = "abs",
) -> list[CvResult]:
    """Cross-validate every sub-task; one CvResult per coordinate."""
    grid = grid if grid is not None else HyperGrid()
    params = grid.tuples(method)
    results = []
    for ell in range(2 * store.n_landmarks):
        subtask = build_subtask(store, ell, n_features)
        results.append(
            mccv(
                subtask,
                params,
                method,
                repeats=repeats,
                train_frac=train_frac,
                seed=_derive_seed(seed, _TAG_CV_SUBTASK, ell),
                ensemble=ensemble,
                sa_config=sa_config,
                score=score,
            )
        )
    return results


def train_landmark_models(
    store: FeatureStore,
    method: str,
    per_subtask: list[HyperParams],
    n_features: int = 6,
    seed: int = 0,
    ensemble: int = 20,
    sa_config: SaConfig | None = None,
    info: dict | None = None,
) -> LandmarkModels:
    """Train the final model of every sub-task on the full model split."""
    two_l = 2 * store.n_landmarks
    if len(per_subtask) != two_l:
        raise InvalidInputError(
            f"need {two_l} hyperparameter tuples, got {len(per_subtask)}"
        )
    base_config = sa_config if sa_config is not None else SaConfig()
    models = []
    selections = []
    for ell in range(two_l):
        subtask = build_subtask(store, ell, n_features)
        model = train(
            subtask.model,
            per_subtask[ell],
            method=method,
            ensemble=ensemble,
            sa_config=replace(base_config, seed=_derive_seed(seed, _TAG_TRAIN, ell)),
        )
        models.append(model)
        selections.append(subtask.selection)
    return LandmarkModels(
        method=method,
        n_features=n_features,
        seed=seed,
        models=tuple(models),
        selections=tuple(selections),
        info=dict(info or {}),
    )


def save_landmark_models(bundle: LandmarkModels, out_dir: str | os.PathLike) -> None:
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    meta = {
        "format_version": MODELS_FORMAT_VERSION,
        "method": bundle.method,
        "n_features": bundle.n_features,
        "seed": bundle.seed,
        "n_subtasks": len(bundle.models),
        "subtasks": [
            {
                "ell": ell,
                "selected": [int(i) for i in sel.indices],
                "selection_rows": list(sel.row_ids),
            }
            for ell, sel in enumerate(bundle.selections)
        ],
        "info": bundle.info,
    }
    with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for ell, model in enumerate(bundle.models):
        save_model(model, os.path.join(out, f"model_{ell:02d}.json"))


def load_landmark_models(models_dir: str | os.PathLike) -> LandmarkModels:
    base = os.fspath(models_dir)
    meta_path = os.path.join(base, "metadata.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from None
    if meta.get("format_version") != MODELS_FORMAT_VERSION:
        raise ParseError(
            f"{meta_path}: unsupported models format {meta.get('format_version')!r}"
        )
    models = []
    selections = []
    for sub in meta["subtasks"]:
        ell = int(sub["ell"])
        models.append(load_model(os.path.join(base, f"model_{ell:02d}.json")))
        indices = np.asarray([int(i) for i in sub["selected"]], dtype=int)
        selections.append(
            SelectionResult(
                indices=indices,
                scores=np.zeros(N_FEATURES),
                row_ids=tuple(int(r) for r in sub["selection_rows"]),
            )
        )
    return LandmarkModels(
        method=str(meta["method"]),
        n_features=int(meta["n_features"]),
        seed=int(meta["seed"]),
        models=tuple(models),
        selections=tuple(selections),
        info=dict(meta.get("info", {})),
    )


# --- evaluation ----------------------------------------------------------------

@dataclass(frozen=True)
class LandmarkStats:
    mnde: float
    stddev: float
    failure_rate: float
    n: int


@dataclass(frozen=True)
class EvaluationReport:
    """Per-landmark and aggregate detection errors on one split.

    errors is (n_images, L); the aggregate row is recomputed from the
    union of all per-landmark errors. stddev is the population standard
    deviation of the normalized errors.
    """

    split: str
    d_mode: str
    e_th: float
    names: tuple[str, ...]
    errors: Array
    per_landmark: tuple[LandmarkStats, ...]
    aggregate: LandmarkStats


def _stats(errors: Array, e_th: float) -> LandmarkStats:
    flat = np.asarray(errors, dtype=float).ravel()
    return LandmarkStats(
        mnde=mnde(flat),
        stddev=float(flat.std()),
        failure_rate=failure_rate(flat, e_th),
        n=flat.size,
    )


def evaluate(
    store: FeatureStore,
    bundle: LandmarkModels,
    split: str = "test",
    d_mode: str = "box",
    e_th: float = 0.1,
) -> EvaluationReport:
    """Score the bundle's predictions against the stored ground truth.

    d_mode "box" normalizes by the floored face-box width, "iod" by the
    distance between the first two true landmarks (the eye centers).
    """
    if split not in ("test", "model", "all"):
        raise InvalidInputError(f"split must be test, model or all, got {split!r}")
    if d_mode not in ("box", "iod"):
        raise InvalidInputError(f"d_mode must be box or iod, got {d_mode!r}")
    n_landmarks = store.n_landmarks
    if len(bundle.models) != 2 * n_landmarks:
        raise InvalidInputError(
            f"bundle has {len(bundle.models)} models, store needs {2 * n_landmarks}"
        )
    if d_mode == "iod" and n_landmarks < 2:
        raise InvalidInputError("iod normalization needs at least two landmarks")
    if split == "test":
        rows = store.test_rows
    elif split == "model":
        rows = store.model_rows
    else:
        rows = np.arange(store.n_images)
    if rows.size == 0:
        raise InvalidInputError(f"split {split!r} is empty")

    errors = np.empty((rows.size, n_landmarks))
    names = []
    for out_i, row in enumerate(rows):
        x1, y1, x2, y2 = (int(v) for v in store.boxes[row])
        width, height = x2 - x1, y2 - y1
        if d_mode == "box":
            d = float(width)
        else:
            d = float(
                np.hypot(
                    store.shapes[row, 0] - store.shapes[row, 2],
                    store.shapes[row, 1] - store.shapes[row, 3],
                )
            )
        names.append(store.names[row])
        for k in range(n_landmarks):
            px = bundle.models[2 * k].predict(
                store.features[row, bundle.selections[2 * k].indices]
            )
            py = bundle.models[2 * k + 1].predict(
                store.features[row, bundle.selections[2 * k + 1].indices]
            )
            pred = (
                rescale_coord(px, x1, width),
                rescale_coord(py, y1, height),
            )
            true = (store.shapes[row, 2 * k], store.shapes[row, 2 * k + 1])
            errors[out_i, k] = detection_error(true, pred, d)

    per_landmark = tuple(_stats(errors[:, k], e_th) for k in range(n_landmarks))
    return EvaluationReport(
        split=split,
        d_mode=d_mode,
        e_th=e_th,
        names=tuple(names),
        errors=errors,
        per_landmark=per_landmark,
        aggregate=_stats(errors, e_th),
    )


def report_to_csv(report: EvaluationReport) -> str:
    """Summary table: one row per landmark plus the aggregate row.

    mnde and failure rate are percentages; stddev stays in natural
    normalized-error units, matching the usual reporting convention.
    """
    lines = ["landmark,mnde_pct,stddev,fr_pct,n"]
    rows = [(str(k + 1), s) for k, s in enumerate(report.per_landmark)]
    rows.append(("all", report.aggregate))
    for label, s in rows:
        lines.append(
            f"{label},{100.0 * s.mnde!r},{s.stddev!r},{100.0 * s.failure_rate!r},{s.n}"
        )
    return "\n".join(lines) + "\n"


def errors_to_csv(report: EvaluationReport) -> str:
    """Long-form per-image, per-landmark normalized errors."""
    lines = ["image,landmark,error"]
    for i, name in enumerate(report.names):
        for k in range(report.errors.shape[1]):
            lines.append(f"{name},{k + 1},{float(report.errors[i, k])!r}")
    return "\n".join(lines) + "\n"
