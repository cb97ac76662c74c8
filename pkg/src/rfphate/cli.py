"""Command-line surface: embed, evaluate, sweep, noise, importance.

Exit codes: 0 success, 2 I/O failure, 3 parse failure, 4 validation
failure, 5 numeric failure. RFPHATE_SEED provides a fallback master seed;
the --seed flag wins.
"""

import argparse
import os
import sys

import numpy as np

from .core import (
    DataError,
    EmptyDatasetError,
    MissingColumnError,
    RaggedRowError,
    RandomSeed,
    load_csv,
    preprocess,
)
from .diffusion import DEFAULT_T_MAX, select_t, spectrum
from .embed import (
    Embedding,
    embed_kernel,
    embedding_to_csv,
    read_embedding_csv,
)
from .evaluate import (
    EvalReport,
    knn_cv_score,
    reports_to_csv,
    robustness_sweep,
    run_noise_experiment,
    summarize_reports,
    sweep_to_csv,
    variable_values,
)
from .forest import (
    ForestParams,
    compute_proximities,
    oob_error,
    permutation_importance,
    resolve_params,
    train_forest,
)
from .svgplot import scatter_svg

EXIT_IO, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERIC = 2, 3, 4, 5

#: a numeric variable with at most this many distinct values is scored as
#: categorical when no explicit kind is given (one-hot groups always are)
CATEGORICAL_MAX_DISTINCT = 5


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="input CSV (header row, comma separated)")
    parser.add_argument("--label", required=True, help="label column name")
    parser.add_argument(
        "--task", choices=["auto", "classification", "regression"], default="auto",
        help="supervision type; auto = classification when the label is "
        "non-numeric or has <= 20 distinct values (default: %(default)s)",
    )
    parser.add_argument(
        "--missing", choices=["drop_rows", "impute_zero_none"], default="drop_rows",
        help="missing cells are empty strings or NA (case-insensitive); "
        "drop the row or impute 0 / category 'none' (default: %(default)s)",
    )
    parser.add_argument("--dims", type=int, default=2, help="embedding dimensions (default: %(default)s)")
    parser.add_argument(
        "--trees", type=int, default=500,
        help="number of trees (default: %(default)s; the reference Titanic "
        "run used 5000)",
    )
    parser.add_argument(
        "--mtry", default="auto",
        help="candidate features per split: auto = floor(sqrt(p)) for "
        "classification, max(1, p/3) for regression (default: %(default)s)",
    )
    parser.add_argument(
        "--min-node-size", type=int, default=None,
        help="smallest splittable node (default: 1 classification, 5 regression)",
    )
    parser.add_argument(
        "--t", default="auto",
        help="diffusion time; auto = entropy-decay knee (default: %(default)s)",
    )
    parser.add_argument(
        "--t-max", type=int, default=DEFAULT_T_MAX,
        help="largest diffusion time scanned for the knee (default: %(default)s)",
    )
    parser.add_argument(
        "--transform", choices=["log", "sqrt"], default="log",
        help="potential transform (default: %(default)s)",
    )
    parser.add_argument(
        "--eps", type=float, default=1e-12,
        help="floor for the log potential (default: %(default)s)",
    )
    parser.add_argument(
        "--seed", type=int, default=None,
        help="master seed; falls back to $RFPHATE_SEED, then 0",
    )


def _seed_from(args) -> RandomSeed:
    if args.seed is not None:
        return RandomSeed(args.seed)
    env = os.environ.get("RFPHATE_SEED")
    return RandomSeed(int(env)) if env else RandomSeed(0)


def _forest_params(args, seed: RandomSeed, p: int) -> ForestParams:
    if args.mtry == "auto":
        mtry = None
    else:
        mtry = int(args.mtry)
        if not 1 <= mtry <= p:
            raise ValueError(f"--mtry must be in [1, {p}]")
    if args.trees < 1:
        raise ValueError("--trees must be >= 1")
    if args.dims < 1:
        raise ValueError("--dims must be >= 1")
    return ForestParams(args.trees, mtry, args.min_node_size, seed)


def _t_override(args) -> int | None:
    if args.t == "auto":
        return None
    t = int(args.t)
    if t < 1:
        raise ValueError("--t must be >= 1")
    return t


def _load(args):
    raw, labels = load_csv(args.input, args.label, args.task)
    return preprocess(raw, labels, args.missing)


def _auto_kind(ds, name: str) -> str:
    values, kind = variable_values(ds, name)
    if kind == "categorical":
        return "categorical"
    distinct = np.unique(values).size
    return "categorical" if distinct <= CATEGORICAL_MAX_DISTINCT else "continuous"


def cmd_embed(args) -> int:
    seed = _seed_from(args)
    ds, labels = _load(args)
    params = _forest_params(args, seed, ds.p)
    forest = train_forest(ds, labels, params)
    err = oob_error(forest, ds, labels)
    importance = permutation_importance(forest, ds, labels, seed.child("importance"))
    kern = compute_proximities(forest, ds)
    emb = embed_kernel(
        kern, args.dims,
        t_override=_t_override(args), t_max=args.t_max,
        transform=args.transform, eps=args.eps,
    )

    print(f"rows: {ds.n}  encoded features: {ds.p}")
    print(f"selected t: {emb.t_used}")
    if labels.task == "classification":
        print(f"oob error: {err:.4f}  oob accuracy: {1 - err:.4f}")
    else:
        print(f"oob mse: {err:.4f}")
    print("top-5 importances:")
    for name, value in importance.ranking()[:5]:
        print(f"  {name}: {value:.5f}")

    extra = {}
    if args.color_by:
        values, _ = variable_values(ds, args.color_by)
        extra[args.color_by] = values
    embedding_to_csv(emb, args.output, labels, extra)
    written = [args.output]
    if args.plot:
        if args.color_by:
            values, kind = variable_values(ds, args.color_by)
            scatter_svg(
                args.plot, emb.Y, values, kind == "categorical",
                title=f"colored by {args.color_by}",
            )
        else:
            scatter_svg(
                args.plot, emb.Y, labels.values.astype(np.float64),
                labels.task == "classification", labels.class_labels,
                title=f"colored by {args.label}",
            )
        written.append(args.plot)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    seed = _seed_from(args)
    ds, _ = _load(args)
    Y = read_embedding_csv(args.embedding)
    if Y.shape[0] != ds.n:
        raise ValueError(
            f"embedding rows ({Y.shape[0]}) do not match data rows ({ds.n}); "
            "evaluate needs a row-aligned embedding CSV"
        )
    emb = Embedding(Y, "loaded")
    reports: list[EvalReport] = []
    for name in [v.strip() for v in args.vars.split(",") if v.strip()]:
        values, _ = variable_values(ds, name)
        kind = args.kind if args.kind != "auto" else _auto_kind(ds, name)
        reports.append(knn_cv_score(emb, values, kind, seed.child("evaluate"), name))
    for rep in reports:
        print(f"{rep.variable}: {rep.metric}={rep.score:.4f} (k={rep.k_used})")
    reports_to_csv(reports, args.report)
    print(f"wrote {args.report}")
    return 0


def cmd_sweep(args) -> int:
    seed = _seed_from(args)
    ds, labels = _load(args)
    params = _forest_params(args, seed, ds.p)
    # the same forest the sweep itself will build at the default mtry;
    # used to pick default grid centers and the target variable
    center_forest = None
    if not args.target_var or not args.t_values:
        from dataclasses import replace

        center_forest = train_forest(
            ds, labels, replace(params, seed=seed.child("sweep-forest"))
        )
    if args.target_var:
        target = args.target_var
    else:
        importance = permutation_importance(
            center_forest, ds, labels, seed.child("importance")
        )
        target = importance.ranking()[0][0]
        print(f"top important variable: {target}")

    if args.mtry_values:
        mtry_values = [int(v) for v in args.mtry_values.split(",")]
    else:
        default_mtry = resolve_params(params, ds.p, labels.task).mtry
        mtry_values = [
            v for v in range(default_mtry - 2, default_mtry + 3) if 1 <= v <= ds.p
        ]
    if args.t_values:
        t_values = [int(v) for v in args.t_values.split(",")]
    else:
        kern = compute_proximities(center_forest, ds)
        t_star = select_t(spectrum(kern), args.t_max)
        print(f"selected t: {t_star}")
        t_values = [t for t in range(t_star - 2, t_star + 3) if t >= 1]

    grid = robustness_sweep(
        ds, labels, args.dims, mtry_values, t_values, target, seed,
        params=params, target_kind=_auto_kind(ds, target),
    )
    spread = float(grid.scores.max() - grid.scores.min())
    print(f"score spread (max - min): {spread:.4f}")
    sweep_to_csv(grid, args.report)
    print(f"wrote {args.report}")
    return 0


def cmd_noise(args) -> int:
    seed = _seed_from(args)
    ds, labels = _load(args)
    params = _forest_params(args, seed, ds.p)
    reports = run_noise_experiment(
        ds, labels, args.q, args.dims, args.repeats, seed, params
    )
    for name, (mean, sd) in summarize_reports(reports).items():
        print(f"{name}: {mean:.4f} +/- {sd:.4f}")
    reports_to_csv(reports, args.report)
    print(f"wrote {args.report}")
    return 0


def cmd_importance(args) -> int:
    seed = _seed_from(args)
    ds, labels = _load(args)
    params = _forest_params(args, seed, ds.p)
    forest = train_forest(ds, labels, params)
    importance = permutation_importance(forest, ds, labels, seed.child("importance"))
    with open(args.report, "w", newline="", encoding="utf-8") as fh:
        fh.write("variable,importance\n")
        for name, value in importance.ranking():
            fh.write(f"{name},{value:.12g}\n")
    for name, value in importance.ranking()[:5]:
        print(f"{name}: {value:.5f}")
    print(f"wrote {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfphate",
        description="Supervised manifold visualization from random-forest "
        "proximities diffused into potential distances and embedded with MDS.",
        epilog="Exit codes: 0 ok, 2 I/O, 3 parse, 4 validation, 5 numeric.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_embed = sub.add_parser("embed", help="fit the pipeline and write an embedding")
    _add_common(p_embed)
    p_embed.add_argument("--output", required=True, help="embedding CSV to write")
    p_embed.add_argument("--plot", default=None, help="optional scatter SVG to write")
    p_embed.add_argument(
        "--color-by", default=None,
        help="variable used for plot color / extra CSV column (default: label)",
    )
    p_embed.set_defaults(func=cmd_embed)

    p_eval = sub.add_parser("evaluate", help="k-NN CV scores of an existing embedding")
    _add_common(p_eval)
    p_eval.add_argument("--embedding", required=True, help="embedding CSV, row-aligned with the data")
    p_eval.add_argument("--vars", required=True, help="comma-separated variable names to predict")
    p_eval.add_argument(
        "--kind", choices=["auto", "categorical", "continuous"], default="auto",
        help="target kind; auto = categorical for one-hot groups or <= "
        f"{CATEGORICAL_MAX_DISTINCT} distinct values (default: %(default)s)",
    )
    p_eval.add_argument("--report", required=True, help="report CSV to write")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="mtry x t robustness grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--mtry-values", default=None, help="comma list (default: default mtry +/- 2)")
    p_sweep.add_argument("--t-values", default=None, help="comma list (default: selected t +/- 2)")
    p_sweep.add_argument("--target-var", default=None, help="variable to score (default: top importance)")
    p_sweep.add_argument("--report", required=True, help="grid CSV to write")
    p_sweep.set_defaults(func=cmd_sweep)

    p_noise = sub.add_parser("noise", help="noise-augmentation robustness experiment")
    _add_common(p_noise)
    p_noise.add_argument("--q", type=int, required=True, help="number of Gaussian noise columns")
    p_noise.add_argument("--repeats", type=int, default=10, help="noise redraws (default: %(default)s)")
    p_noise.add_argument("--report", required=True, help="report CSV to write")
    p_noise.set_defaults(func=cmd_noise)

    p_imp = sub.add_parser("importance", help="ranked permutation importance")
    _add_common(p_imp)
    p_imp.add_argument("--report", required=True, help="ranked (variable, importance) CSV")
    p_imp.set_defaults(func=cmd_importance)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RaggedRowError, MissingColumnError, EmptyDatasetError) as exc:
        print(f"error (parse): {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DataError as exc:
        print(f"error (parse): {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except np.linalg.LinAlgError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
