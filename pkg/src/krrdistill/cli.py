"""Command-line harness for the distillation experiments.

Subcommands:
    grf / clusters / mnist   parameter sweeps writing one CSV row per
                             (grid point, seed)
    gen-grf / gen-clusters   persist a synthetic dataset as CSV
    distill-construct        constructive distillation of a data CSV
    distill-opt              gradient-based distillation of a data CSV
    bounds                   evaluate the error-bound calculators

Every sweep task derives five named substreams (data, feature map,
construction, optimizer init, optimizer) from SeedSequence([seed,
grid_index]), so grid points and seeds can run in any parallel
arrangement and still produce identical rows; rows are buffered and
written in grid-major, seed-minor order.
Wall-clock timing is opt-in (--timing) because the default output must
be byte-identical across reruns.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import functools
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import data as datamod
from . import distill, kernel, krr, optdistill, rff
from .data import IdxError
from .distill import RankDeficientError
from .kernel import KernelSpec
from .numerics import NotPositiveDefiniteError
from .optdistill import NonFiniteLossError, OptConfig
from .rff import LeverageDegenerateError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

NUMERIC_ERRORS = (
    np.linalg.LinAlgError,
    NotPositiveDefiniteError,
    RankDeficientError,
    NonFiniteLossError,
    LeverageDegenerateError,
)


class DataFileError(Exception):
    """A data file is missing, unreadable, or malformed."""


@dataclasses.dataclass(frozen=True)
class ExperimentRow:
    """One sweep result; field order defines the CSV schema."""

    experiment: str
    grid_param: float
    seed: int
    n: int
    d_eff: float | None
    s_phi: int | None
    compression: float | None
    r: float | None
    bound_vs_labels_scaled: float | None
    bound_vs_optimal_scaled: float | None
    loss_construct_vs_labels_scaled: float | None
    loss_construct_vs_optimal_scaled: float | None
    loss_optimized_scaled: float | None
    wall_time_seconds: float | None
    error: str = ""


CSV_FIELDS = [f.name for f in dataclasses.fields(ExperimentRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_rows(out_path, rows) -> None:
    with open(out_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, name)) for name in CSV_FIELDS])


SWEEP_CONSISTENCY_RTOL = 1e-3


def task_seeds(seed: int, grid_index: int):
    """Named substreams for one (grid point, seed) task.

    The rule is SeedSequence([seed, grid_index]) -> five uint32 words,
    used as (data, map, construct, optimizer-init, optimizer) seeds.
    """
    state = np.random.SeedSequence([int(seed), int(grid_index)]).generate_state(5)
    return tuple(int(v) for v in state)


def mnist_lambda(n: int) -> float:
    """Ridge parameter scaled as 1/sqrt(n), anchored at 1e-4 for n=5000."""
    return 1e-4 * math.sqrt(5000.0 / n)


@functools.lru_cache(maxsize=4)
def _load_idx_cached(images_path: str, labels_path: str):
    return datamod.load_mnist_idx(images_path, labels_path)


def _task_data(task, spec: KernelSpec, data_seed: int):
    kind = task["kind"]
    if kind == "grf":
        ld = datamod.gen_grf(task["n"], task["grid_param"], task["sigma_y"], spec, data_seed)
    elif kind == "clusters":
        ld = datamod.gen_two_clusters(task["n"], task["grid_param"], data_seed)
    elif kind == "mnist":
        raw = _load_idx_cached(task["mnist_images"], task["mnist_labels"])
        ld = datamod.binary_subset(raw, 0, 1, task["n"], data_seed)
    else:
        raise ValueError(f"unknown task kind {kind!r}")
    return ld


def _distillation_pipeline(task) -> dict:
    spec = KernelSpec(lengthscale=task["lengthscale"])
    lam = task["lam"]
    data_seed, map_seed, init_seed, opt_init_seed, opt_seed = task_seeds(
        task["seed"], task["grid_index"]
    )
    ld = _task_data(task, spec, data_seed)
    X = ld.X
    n = X.shape[0]

    K = kernel.gram(spec, X, X)
    y_scaled, r, model = krr.rescale_labels(X, ld.y, spec, lam, gram=K)
    d_eff = krr.effective_dof(K, lam)
    s_phi = krr.distilled_size(d_eff)
    m = s_phi + 1

    map_rng = np.random.default_rng(map_seed)
    if task["scheme"] == "weighted":
        fmap = rff.weighted_map(spec, s_phi, X, lam, map_rng, pool_factor=task["pool_factor"])
    else:
        fmap = rff.plain_map(spec, s_phi, X.shape[1], map_rng)

    # Subset initialization needs m <= n; larger budgets repeat data
    # rows with jitter so S still covers the data region.
    strategy = "subset" if m <= n else "subset-repeat"
    dset, _ = distill.construct(
        X,
        y_scaled,
        spec,
        lam,
        fmap,
        np.random.default_rng(init_seed),
        strategy=strategy,
        consistency_rtol=SWEEP_CONSISTENCY_RTOL,
    )
    report = distill.evaluate(dset, X, y_scaled, model, rkhs_scale=r, gram_xx=K, d_eff=d_eff)

    # The optimizer starts from a data subset with its labels; only when
    # the budget exceeds n does it fall back to the constructive set.
    if m <= n:
        opt_rng = np.random.default_rng(opt_init_seed)
        idx = opt_rng.choice(n, size=m, replace=False)
        opt_init = distill.DistilledSet(
            S=X[idx].copy(),
            y_S=y_scaled[idx].copy(),
            alpha_S=np.zeros(m),
            feature_map=fmap,
            lam=lam,
        )
    else:
        opt_init = dset
    cfg = OptConfig(iterations=task["iters"], batch_size=task["batch"], seed=opt_seed)
    _, trace = optdistill.optimize(X, y_scaled, opt_init, spec, lam, cfg)
    loss_optimized = trace.losses[-1]

    return {
        "n": n,
        "d_eff": report.d_eff,
        "s_phi": report.s_phi,
        "compression": report.compression,
        "r": r,
        "bound_vs_labels_scaled": report.bound_vs_labels_scaled,
        "bound_vs_optimal_scaled": report.bound_vs_optimal_scaled,
        "loss_construct_vs_labels_scaled": report.loss_vs_labels_scaled,
        "loss_construct_vs_optimal_scaled": report.loss_vs_optimal_scaled,
        "loss_optimized_scaled": r**2 * loss_optimized,
        # Not a CSV column; kept for callers tracking optimizer progress.
        "loss_optimizer_initial_scaled": r**2 * trace.losses[0],
    }


def _run_task(task) -> ExperimentRow:
    start = time.perf_counter()
    error = ""
    values = {}
    try:
        values = _distillation_pipeline(task)
    except Exception as exc:  # recorded per-row; the sweep continues
        error = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - start if task["timing"] else 0.0
    return ExperimentRow(
        experiment=task["experiment"],
        grid_param=task["grid_param"],
        seed=task["seed"],
        n=values.get("n", task["n"]),
        d_eff=values.get("d_eff"),
        s_phi=values.get("s_phi"),
        compression=values.get("compression"),
        r=values.get("r"),
        bound_vs_labels_scaled=values.get("bound_vs_labels_scaled"),
        bound_vs_optimal_scaled=values.get("bound_vs_optimal_scaled"),
        loss_construct_vs_labels_scaled=values.get("loss_construct_vs_labels_scaled"),
        loss_construct_vs_optimal_scaled=values.get("loss_construct_vs_optimal_scaled"),
        loss_optimized_scaled=values.get("loss_optimized_scaled"),
        wall_time_seconds=wall,
        error=error,
    )


def _execute(tasks, workers: int):
    if workers <= 1:
        return [_run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def _sweep(experiment, kind, grid, seeds, common, workers, out_path):
    tasks = []
    for grid_index, grid_param in enumerate(grid):
        for seed in seeds:
            task = dict(common)
            task.update(
                experiment=experiment,
                kind=kind,
                grid_param=grid_param,
                grid_index=grid_index,
                seed=int(seed),
            )
            tasks.append(task)
    rows = _execute(tasks, workers)
    if out_path is not None:
        write_rows(out_path, rows)
    return rows


def run_grf(
    sigmas,
    n,
    lam,
    seeds,
    out_path,
    *,
    lengthscale=1.5,
    sigma_y=0.01,
    iters=2000,
    batch=None,
    scheme="weighted",
    pool_factor=10,
    workers=1,
    timing=False,
):
    """Gaussian-random-field sweep over sigma_x values."""
    common = dict(
        n=int(n),
        lam=float(lam),
        lengthscale=float(lengthscale),
        sigma_y=float(sigma_y),
        iters=int(iters),
        batch=batch,
        scheme=scheme,
        pool_factor=int(pool_factor),
        timing=bool(timing),
    )
    return _sweep("grf", "grf", sigmas, seeds, common, workers, out_path)


def run_clusters(
    sigmas,
    n,
    lam,
    seeds,
    out_path,
    *,
    lengthscale=1.5,
    iters=2000,
    batch=None,
    scheme="weighted",
    pool_factor=10,
    workers=1,
    timing=False,
):
    """Two-cluster classification sweep over sigma_x values."""
    common = dict(
        n=int(n),
        lam=float(lam),
        lengthscale=float(lengthscale),
        iters=int(iters),
        batch=batch,
        scheme=scheme,
        pool_factor=int(pool_factor),
        timing=bool(timing),
    )
    return _sweep("clusters", "clusters", sigmas, seeds, common, workers, out_path)


def run_mnist(
    ns,
    mnist_images,
    mnist_labels,
    seeds,
    out_path,
    *,
    lengthscale=13.9,
    iters=2000,
    batch=2000,
    scheme="weighted",
    pool_factor=10,
    workers=1,
    timing=False,
):
    """MNIST binary 0-vs-1 sweep over subset sizes n, with lam ~ 1/sqrt(n)."""
    tasks = []
    for grid_index, n in enumerate(ns):
        for seed in seeds:
            tasks.append(
                dict(
                    experiment="mnist",
                    kind="mnist",
                    grid_param=int(n),
                    grid_index=grid_index,
                    seed=int(seed),
                    n=int(n),
                    lam=mnist_lambda(int(n)),
                    lengthscale=float(lengthscale),
                    mnist_images=str(mnist_images),
                    mnist_labels=str(mnist_labels),
                    iters=int(iters),
                    batch=batch,
                    scheme=scheme,
                    pool_factor=int(pool_factor),
                    timing=bool(timing),
                )
            )
    rows = _execute(tasks, workers)
    if out_path is not None:
        write_rows(out_path, rows)
    return rows


# ---------------------------------------------------------------------------
# Point/label CSV persistence for the one-off stages
# ---------------------------------------------------------------------------


def write_data_csv(path, X, y) -> None:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{j}" for j in range(X.shape[1])] + ["y"])
        for i in range(X.shape[0]):
            writer.writerow([_fmt(v) for v in X[i]] + [_fmt(float(y[i]))])


def read_data_csv(path):
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or header[-1] != "y" or len(header) < 2:
                raise DataFileError(f"{path}: expected header x0,...,y")
            rows = [[float(cell) for cell in row] for row in reader if row]
    except OSError as exc:
        raise DataFileError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise DataFileError(f"{path}: malformed numeric cell ({exc})") from exc
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return arr[:, :-1], arr[:, -1]


def _cmd_gen_grf(args) -> int:
    spec = KernelSpec(lengthscale=args.lengthscale)
    ld = datamod.gen_grf(args.n, args.sigma, args.sigma_y, spec, args.seed)
    write_data_csv(args.out, ld.X, ld.y)
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


def _cmd_gen_clusters(args) -> int:
    ld = datamod.gen_two_clusters(args.n, args.sigma, args.seed)
    write_data_csv(args.out, ld.X, ld.y)
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    print(f"bound_vs_labels {_fmt(distill.bound_vs_labels(args.loss, args.lam))}")
    print(f"bound_vs_optimal {_fmt(distill.bound_vs_optimal(args.lam))}")
    return EXIT_OK


def _build_map(spec, s_phi, X, lam, scheme, pool_factor, rng):
    if scheme == "weighted":
        return rff.weighted_map(spec, s_phi, X, lam, rng, pool_factor=pool_factor)
    return rff.plain_map(spec, s_phi, X.shape[1], rng)


def _cmd_distill_construct(args) -> int:
    X, y = read_data_csv(args.data)
    spec = KernelSpec(lengthscale=args.lengthscale)
    rng = np.random.default_rng(args.seed)
    K = kernel.gram(spec, X, X)
    d_eff = krr.effective_dof(K, args.lam)
    s_phi = krr.distilled_size(d_eff)
    m = s_phi + 1
    fmap = _build_map(spec, s_phi, X, args.lam, args.scheme, args.pool_factor, rng)
    strategy = "subset" if m <= X.shape[0] else "subset-repeat"
    dset, residual = distill.construct(X, y, spec, args.lam, fmap, rng, strategy=strategy)
    write_data_csv(args.out, dset.S, dset.y_S)
    print(f"d_eff {_fmt(d_eff)}")
    print(f"s_phi {s_phi}")
    print(f"m {m}")
    print(f"residual {_fmt(residual)}")
    print(f"wrote {m} rows to {args.out}")
    return EXIT_OK


def _cmd_distill_opt(args) -> int:
    X, y = read_data_csv(args.data)
    spec = KernelSpec(lengthscale=args.lengthscale)
    rng = np.random.default_rng(args.seed)
    if args.init is not None:
        S0, y_S0 = read_data_csv(args.init)
        m = S0.shape[0]
        fmap = rff.plain_map(spec, m - 1, X.shape[1], rng)
    else:
        K = kernel.gram(spec, X, X)
        s_phi = krr.distilled_size(krr.effective_dof(K, args.lam))
        m = s_phi + 1
        if m > X.shape[0]:
            raise RankDeficientError(
                f"subset initialization needs m <= n, got m={m}, n={X.shape[0]}; "
                "provide --init"
            )
        idx = rng.choice(X.shape[0], size=m, replace=False)
        S0, y_S0 = X[idx].copy(), y[idx].copy()
        fmap = rff.plain_map(spec, m - 1, X.shape[1], rng)
    init = distill.DistilledSet(
        S=S0, y_S=y_S0, alpha_S=np.zeros(m), feature_map=fmap, lam=args.lam
    )
    cfg = OptConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        batch_size=args.batch,
        seed=args.seed,
    )
    final, trace = optdistill.optimize(X, y, init, spec, args.lam, cfg)
    write_data_csv(args.out, final.S, final.y_S)
    print(f"initial_loss {_fmt(trace.losses[0])}")
    print(f"final_loss {_fmt(trace.losses[-1])}")
    print(f"wrote {m} rows to {args.out}")
    return EXIT_OK


def _cmd_grf(args) -> int:
    run_grf(
        args.sigmas,
        args.n,
        args.lam,
        args.seeds,
        args.out,
        lengthscale=args.lengthscale,
        sigma_y=args.sigma_y,
        iters=args.iters,
        batch=args.batch,
        scheme=args.scheme,
        pool_factor=args.pool_factor,
        workers=args.workers,
        timing=args.timing,
    )
    print(f"wrote {len(args.sigmas) * len(args.seeds)} rows to {args.out}")
    return EXIT_OK


def _cmd_clusters(args) -> int:
    run_clusters(
        args.sigmas,
        args.n,
        args.lam,
        args.seeds,
        args.out,
        lengthscale=args.lengthscale,
        iters=args.iters,
        batch=args.batch,
        scheme=args.scheme,
        pool_factor=args.pool_factor,
        workers=args.workers,
        timing=args.timing,
    )
    print(f"wrote {len(args.sigmas) * len(args.seeds)} rows to {args.out}")
    return EXIT_OK


def _cmd_mnist(args) -> int:
    run_mnist(
        args.ns,
        args.mnist_images,
        args.mnist_labels,
        args.seeds,
        args.out,
        lengthscale=args.lengthscale,
        iters=args.iters,
        batch=args.batch,
        scheme=args.scheme,
        pool_factor=args.pool_factor,
        workers=args.workers,
        timing=args.timing,
    )
    print(f"wrote {len(args.ns) * len(args.seeds)} rows to {args.out}")
    return EXIT_OK


def _add_sweep_flags(parser, batch_default=None):
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--iters", type=int, default=2000)
    parser.add_argument("--batch", type=int, default=batch_default)
    parser.add_argument("--scheme", choices=["weighted", "plain"], default="weighted")
    parser.add_argument("--pool-factor", dest="pool_factor", type=int, default=10)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--timing", action="store_true", help="record wall time (breaks rerun byte-identity)")
    parser.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krrdistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grf", help="Gaussian-random-field sweep")
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--lengthscale", type=float, default=1.5)
    p.add_argument("--sigma-y", dest="sigma_y", type=float, default=0.01)
    _add_sweep_flags(p)
    p.set_defaults(func=_cmd_grf)

    p = sub.add_parser("clusters", help="two-cluster classification sweep")
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--lengthscale", type=float, default=1.5)
    _add_sweep_flags(p)
    p.set_defaults(func=_cmd_clusters)

    p = sub.add_parser("mnist", help="MNIST binary 0-vs-1 sweep")
    p.add_argument("--ns", type=int, nargs="+", default=[500, 1000, 2000])
    p.add_argument("--mnist-images", required=True)
    p.add_argument("--mnist-labels", required=True)
    p.add_argument("--lengthscale", type=float, default=13.9)
    _add_sweep_flags(p, batch_default=2000)
    p.set_defaults(func=_cmd_mnist)

    p = sub.add_parser("gen-grf", help="generate GRF data as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--sigma-y", dest="sigma_y", type=float, default=0.01)
    p.add_argument("--lengthscale", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_grf)

    p = sub.add_parser("gen-clusters", help="generate two-cluster data as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_clusters)

    p = sub.add_parser("distill-construct", help="constructive distillation of a data CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--lengthscale", type=float, default=1.5)
    p.add_argument("--scheme", choices=["weighted", "plain"], default="weighted")
    p.add_argument("--pool-factor", dest="pool_factor", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_distill_construct)

    p = sub.add_parser("distill-opt", help="gradient-based distillation of a data CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--init", default=None, help="distilled CSV to start from (default: data subset)")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    p.add_argument("--lengthscale", type=float, default=1.5)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_distill_opt)

    p = sub.add_parser("bounds", help="evaluate the distillation error bounds")
    p.add_argument("--loss", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(func=_cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFileError, IdxError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
