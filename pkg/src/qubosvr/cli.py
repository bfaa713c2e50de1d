"""Command-line interface.

Subcommands cover the full workflow: `preprocess` builds a feature store
from images and annotations, `cv` cross-validates hyperparameters per
landmark coordinate, `train` fits the final models, `eval` scores them,
and `qubo-dump` exports one sub-task's QUBO as text.

All randomness is seeded via --seed; identical inputs and flags produce
byte-identical artifacts. Output locations default to the directory in
the QUBOSVR_OUTDIR environment variable (falling back to the working
directory); --out overrides per command.

Exit codes: 0 success, 2 invalid input or parse failure, 3 capacity
exceeded, 4 non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (
    CapacityError,
    ConvergenceError,
    InvalidInputError,
    ParseError,
    QuboSvrError,
)
from .pipeline import (
    HyperGrid,
    build_subtask,
    evaluate,
    errors_to_csv,
    hyperparams_from_dict,
    hyperparams_to_dict,
    load_landmark_models,
    load_store,
    preprocess,
    report_to_csv,
    run_cv,
    save_landmark_models,
    save_store,
    train_landmark_models,
)
from .qubo import Encoding, build_dual, build_qubo, qubo_to_text
from .solvers import SaConfig
from .svr import METHODS, HyperParams
from .kernels import GaussianKernel

OUTDIR_ENV = "QUBOSVR_OUTDIR"

SELECTION_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CAPACITY = 3
EXIT_NO_CONVERGENCE = 4


def _resolve_out(explicit: str | None, default_name: str) -> str:
    if explicit:
        return explicit
    return os.path.join(os.environ.get(OUTDIR_ENV, "."), default_name)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad comma-separated float list {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad comma-separated int list {text!r}")


def _add_sa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sweeps", type=int, default=1000, help="annealing sweeps per read")
    p.add_argument("--reads", type=int, default=1000, help="annealing reads per run")
    p.add_argument(
        "--keep-best", type=int, default=20,
        help="low-energy samples averaged into each run's multiplier vector",
    )
    p.add_argument(
        "--ensemble", type=int, default=20,
        help="independent annealing runs averaged into one model",
    )


def _sa_config(args, seed: int = 0) -> SaConfig:
    return SaConfig(
        sweeps=args.sweeps, reads=args.reads, keep_best=args.keep_best, seed=seed
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubosvr",
        description="Landmark regression by QUBO-encoded support vector machines.",
        epilog=f"Output directories default under ${OUTDIR_ENV} (or the working directory).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build a feature store from images")
    p.add_argument("--images", required=True, help="directory of .pgm/.ppm images")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--out", help="store output directory")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--test-frac", type=float, default=0.2, help="held-out fraction")

    p = sub.add_parser("cv", help="cross-validate hyperparameters per sub-task")
    p.add_argument("--store", required=True, help="feature store directory")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", help="selection output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=int, default=6, help="selected feature count")
    p.add_argument("--repeats", type=int, default=50, help="resamples per tuple")
    p.add_argument("--train-frac", type=float, default=0.10, help="resample train fraction")
    p.add_argument("--epsilon", type=float, default=0.1, help="tube half-width")
    p.add_argument(
        "--mne", choices=("abs", "signed"), default="abs",
        help="score tuples by |MNE| (default) or the signed MNE",
    )
    p.add_argument("--grid-eta", type=_float_list, default=(4.0, 16.0, 64.0, 256.0),
                   help="kernel width grid, comma separated")
    p.add_argument("--grid-gamma", type=_float_list, default=(15.0, 31.0, 63.0),
                   help="baseline box-bound grid")
    p.add_argument("--grid-bits", type=_int_list, default=(4, 5, 6),
                   help="encoding width grid (annealing/exact)")
    p.add_argument("--grid-lambda", type=_float_list, default=(1.0, 5.0, 10.0),
                   help="balance penalty grid (annealing/exact)")
    p.add_argument("--frac-bits", type=int, default=0, help="fractional encoding bits")
    _add_sa_flags(p)

    p = sub.add_parser("train", help="train final models on the model split")
    p.add_argument("--store", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", help="models output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--selection", help="selection.json from the cv command")
    p.add_argument("--eta", type=float, help="kernel width (explicit tuple)")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--gamma", type=float, help="box bound (baseline explicit tuple)")
    p.add_argument("--bits", type=int, help="encoding bits (annealing/exact tuple)")
    p.add_argument("--frac-bits", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="balance penalty (annealing/exact tuple)")
    p.add_argument("--strict", action="store_true",
                   help="exit 4 if any solver failed to converge")
    _add_sa_flags(p)

    p = sub.add_parser("eval", help="score trained models on the held-out split")
    p.add_argument("--store", required=True)
    p.add_argument("--models", required=True, help="models directory from train")
    p.add_argument("--out", help="report output directory")
    p.add_argument("--eth", type=float, default=0.1, help="failure threshold")
    p.add_argument("--d-mode", choices=("box", "iod"), default="box",
                   help="error normalizer: face-box width or inter-ocular distance")

    p = sub.add_parser("qubo-dump", help="export one sub-task's QUBO as text")
    p.add_argument("--store", required=True)
    p.add_argument("--ell", type=int, required=True, help="sub-task index (0-based)")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--frac-bits", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--out-file", help="output path (default <out>/qubo.txt)")
    p.add_argument("--out", help="output directory when --out-file is not given")

    return parser


def _selection_path(out_dir: str) -> str:
    return os.path.join(out_dir, "selection.json")


def cmd_preprocess(args) -> int:
    store = preprocess(
        args.images, args.annotations, seed=args.seed, test_frac=args.test_frac
    )
    out = _resolve_out(args.out, "store")
    save_store(store, out)
    print(
        f"store: {store.n_images} images, {store.n_landmarks} landmarks, "
        f"{store.test_rows.size} test rows -> {out}"
    )
    return EXIT_OK


def cmd_cv(args) -> int:
    store = load_store(args.store)
    grid = HyperGrid(
        etas=args.grid_eta,
        box_bounds=args.grid_gamma,
        bits=args.grid_bits,
        frac_bits=args.frac_bits,
        lams=args.grid_lambda,
        epsilon=args.epsilon,
    )
    results = run_cv(
        store,
        args.method,
        n_features=args.features,
        grid=grid,
        repeats=args.repeats,
        train_frac=args.train_frac,
        seed=args.seed,
        ensemble=args.ensemble,
        sa_config=_sa_config(args),
        score=args.mne,
    )
    out = _resolve_out(args.out, "cv")
    os.makedirs(out, exist_ok=True)

    subtasks = []
    table = ["subtask,landmark,coord,gamma,eta,lambda,bits,score,selected"]
    for res in results:
        subtask = build_subtask(store, res.ell, args.features)
        subtasks.append(
            {
                "ell": res.ell,
                "best": hyperparams_to_dict(res.best),
                "score": float(res.scores[res.best_index]),
                "selected": [int(i) for i in subtask.selection.indices],
                "selection_rows": list(subtask.selection.row_ids),
            }
        )
        for t, hp in enumerate(res.params):
            d = hyperparams_to_dict(hp)
            table.append(
                ",".join(
                    [
                        str(res.ell),
                        str(res.ell // 2 + 1),
                        "x" if res.ell % 2 == 0 else "y",
                        repr(d["gamma"]),
                        repr(d["eta"]),
                        repr(d.get("lambda", "")) if "lambda" in d else "",
                        str(d.get("bits", "")),
                        repr(float(res.scores[t])),
                        "1" if t == res.best_index else "0",
                    ]
                )
            )
    payload = {
        "format_version": SELECTION_FORMAT_VERSION,
        "method": args.method,
        "n_features": args.features,
        "seed": args.seed,
        "score": args.mne,
        "repeats": args.repeats,
        "train_frac": args.train_frac,
        "subtasks": subtasks,
    }
    with open(_selection_path(out), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "table.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(table) + "\n")
    print(f"cv: {len(results)} sub-tasks, {len(results[0].params)} tuples each -> {out}")
    return EXIT_OK


def _explicit_tuple(args) -> HyperParams:
    if args.eta is None:
        raise InvalidInputError("train needs --selection or an explicit --eta tuple")
    kernel = GaussianKernel(eta=args.eta)
    if args.method == "baseline":
        if args.gamma is None:
            raise InvalidInputError("baseline tuples need --gamma")
        return HyperParams(kernel=kernel, epsilon=args.epsilon, box_bound=args.gamma)
    if args.bits is None:
        raise InvalidInputError(f"{args.method} tuples need --bits")
    return HyperParams(
        kernel=kernel,
        epsilon=args.epsilon,
        encoding=Encoding(bits=args.bits, frac_bits=args.frac_bits),
        lam=args.lam,
    )


def cmd_train(args) -> int:
    store = load_store(args.store)
    two_l = 2 * store.n_landmarks
    info: dict = {}
    if args.selection and args.eta is not None:
        raise InvalidInputError("--selection and an explicit tuple are mutually exclusive")
    if args.selection:
        try:
            with open(args.selection, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError:
            raise InvalidInputError(f"selection file not found: {args.selection}")
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.selection}: {exc}") from None
        if payload.get("format_version") != SELECTION_FORMAT_VERSION:
            raise ParseError(
                f"{args.selection}: unsupported selection format "
                f"{payload.get('format_version')!r}"
            )
        if payload.get("method") != args.method:
            raise InvalidInputError(
                f"selection was cross-validated for method {payload.get('method')!r}, "
                f"not {args.method!r}"
            )
        subtasks = sorted(payload["subtasks"], key=lambda s: int(s["ell"]))
        if [int(s["ell"]) for s in subtasks] != list(range(two_l)):
            raise InvalidInputError(
                f"{args.selection}: expected sub-tasks 0..{two_l - 1}"
            )
        per_subtask = [hyperparams_from_dict(s["best"]) for s in subtasks]
        n_features = int(payload["n_features"])
        info["selection"] = args.selection
    else:
        per_subtask = [_explicit_tuple(args)] * two_l
        n_features = args.features
    bundle = train_landmark_models(
        store,
        args.method,
        per_subtask,
        n_features=n_features,
        seed=args.seed,
        ensemble=args.ensemble,
        sa_config=_sa_config(args),
        info=info,
    )
    out = _resolve_out(args.out, "models")
    save_landmark_models(bundle, out)
    stubborn = [
        ell
        for ell, model in enumerate(bundle.models)
        if model.metadata.get("converged") is False
    ]
    if stubborn:
        print(
            f"warning: solver did not converge for sub-tasks {stubborn}",
            file=sys.stderr,
        )
        if args.strict:
            raise ConvergenceError(f"non-converged sub-tasks: {stubborn}")
    print(f"train: {len(bundle.models)} models ({args.method}) -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    store = load_store(args.store)
    bundle = load_landmark_models(args.models)
    report = evaluate(store, bundle, split="test", d_mode=args.d_mode, e_th=args.eth)
    out = _resolve_out(args.out, "report")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_csv(report))
    with open(os.path.join(out, "errors.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(errors_to_csv(report))
    agg = report.aggregate
    print(
        f"eval: {report.errors.shape[0]} images, aggregate mnde "
        f"{100.0 * agg.mnde:.2f}% fr {100.0 * agg.failure_rate:.2f}% -> {out}"
    )
    return EXIT_OK


def cmd_qubo_dump(args) -> int:
    store = load_store(args.store)
    subtask = build_subtask(store, args.ell, args.features)
    hp = HyperParams(
        kernel=GaussianKernel(eta=args.eta),
        epsilon=args.epsilon,
        encoding=Encoding(bits=args.bits, frac_bits=args.frac_bits),
        lam=args.lam,
    )
    dual = build_dual(subtask.model, hp.kernel, hp.epsilon)
    problem = build_qubo(dual, hp.encoding, hp.lam)
    if args.out_file:
        path = args.out_file
    else:
        out = _resolve_out(args.out, ".")
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "qubo.txt")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(qubo_to_text(problem))
    print(f"qubo: {problem.dim} bits -> {path}")
    return EXIT_OK


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "cv": cmd_cv,
    "train": cmd_train,
    "eval": cmd_eval,
    "qubo-dump": cmd_qubo_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except QuboSvrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
