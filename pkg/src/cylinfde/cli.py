"""Command-line surface: convergence studies, training, and evaluation.

    cylin-fde converge --preset bhe-deg4-delta --degrees 4,8,16 --out runs/c
    cylin-fde train    --config run.ini [--seed N] [--out DIR]
    cylin-fde eval     --checkpoint best.ckpt --preset ... --what errors,derivative

Every command writes CSV tables (and figures, unless output.figures is off)
into the output directory and is reproducible: identical config and seed
give identical CSV and checkpoint bytes.

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O error.
"""

import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _setup_threads():
    # Must run before numpy/numba initialize; the only supported environment
    # variable is the thread count.
    n = os.environ.get("CYLIN_FDE_THREADS")
    if n:
        os.environ.setdefault("OMP_NUM_THREADS", n)
        os.environ.setdefault("OPENBLAS_NUM_THREADS", n)
        os.environ.setdefault("NUMBA_NUM_THREADS", n)
    os.environ.setdefault("OMP_WAIT_POLICY", "passive")
    os.environ.setdefault("GOMP_SPINCOUNT", "0")
    os.environ.setdefault("OPENBLAS_THREAD_TIMEOUT", "4")
    os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")


def _build_parser():
    import argparse

    parser = argparse.ArgumentParser(
        prog="cylin-fde",
        description="Coefficient-space FDE reduction with a PINN solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (INI)")
        p.add_argument("--preset", help="shipped preset name")
        p.add_argument("--seed", type=int, help="override training/sampling seed")
        p.add_argument("--out", help="override output directory")

    p = sub.add_parser("converge", help="truncation-degree convergence study")
    common(p)
    p.add_argument("--degrees", default="4,8,16,32,64,128,256,512",
                   help="comma-separated degrees (default 4..512 doubling)")
    p.add_argument("--reference-degree", type=int, default=1000)
    p.add_argument("--n-thetas", type=int, default=100)
    p.add_argument("--tau", type=float, default=None,
                   help="evaluation time (default: end of the problem's range)")

    p = sub.add_parser("train", help="train a network on the configured problem")
    common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--what", default="errors",
                   help="comma list of: errors, derivative, second_order, cross_degree")
    p.add_argument("--eval-degree", type=int, default=None,
                   help="evaluation degree for cross_degree (default: model degree)")
    p.add_argument("--t", type=float, default=None,
                   help="time for derivative/second_order (default: end of range)")
    p.add_argument("--fd-step", type=float, default=1e-3)
    return parser


def main(argv=None) -> int:
    _setup_threads()
    args = _build_parser().parse_args(argv)

    from .config import ConfigError, load_run_config

    try:
        cfg = load_run_config(args.config, args.preset, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "converge":
            return _cmd_converge(cfg, args)
        if args.command == "train":
            return _cmd_train(cfg, args)
        return _cmd_eval(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def _outdir(cfg):
    path = cfg["output"]["directory"]
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(cfg, command):
    from . import __version__

    return {"version": __version__, "command": command,
            "seed": cfg["training"]["seed"]}


def _cmd_converge(cfg, args) -> int:
    import numpy as np

    from .basis import BasisSpec
    from .config import ConfigError
    from .cylindrical import CoefficientVector, FunctionalOracle, convergence_study
    from .training import latin_hypercube

    degrees = sorted(int(d) for d in args.degrees.split(","))
    if degrees[-1] >= args.reference_degree:
        raise ConfigError("all degrees must be below the reference degree")

    ref_cfg = cfg.with_overrides()
    ref_cfg.values["problem"]["degree"] = args.reference_degree
    problem = ref_cfg.build_problem()
    tau = args.tau if args.tau is not None else problem.t_range[1]

    thetas_box = latin_hypercube(args.n_thetas, problem.a_ranges, cfg["sampler"]["seed"])
    spec = BasisSpec(problem.spec.family, args.reference_degree)
    thetas = [CoefficientVector(row, spec) for row in thetas_box]
    oracle = FunctionalOracle(spec, lambda cv: float(problem.analytic(cv.values, tau)))

    table = convergence_study(oracle, degrees, thetas)
    out = _outdir(cfg)
    table.write_csv(os.path.join(out, "converge.csv"))
    cfg.write(os.path.join(out, "converge-manifest.ini"), _manifest(cfg, "converge"))
    if cfg["output"]["figures"]:
        from .report import plot_convergence

        plot_convergence([r.degree for r in table.rows], np.maximum(table.errors(), 1e-18),
                         os.path.join(out, "converge.png"),
                         title=f"{problem.name}: truncation convergence at t={tau:g}")
    for row in table.rows:
        print(f"degree {row.degree:5d}: mean rel error {row.mean_rel_error:.6e} "
              f"({row.n_samples - row.n_excluded}/{row.n_samples} samples)")
    return EXIT_OK


def _cmd_train(cfg, args) -> int:
    from .network import save_checkpoint
    from .training import TrainingDiverged, train

    problem = cfg.build_problem()
    net = cfg.build_network()
    tcfg = cfg.build_train_config()
    scfg = cfg.build_sampler_config(problem)
    out = _outdir(cfg)

    extra = {"problem_name": problem.name, "iterations": tcfg.iterations}
    code = EXIT_OK
    try:
        result = train(problem, net, tcfg, scfg)
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        result = exc.result
        extra["diverged_at"] = exc.iteration
        code = EXIT_DIVERGED

    result.history.write_csv(os.path.join(out, "history.csv"))
    save_checkpoint(result.best_net, os.path.join(out, "best.ckpt"),
                    {**extra, "val_rel_error": result.best_val_error, "role": "best"})
    save_checkpoint(result.final_net, os.path.join(out, "final.ckpt"),
                    {**extra, "val_rel_error": result.final_val_error, "role": "final"})
    cfg.write(os.path.join(out, "manifest.ini"), _manifest(cfg, "train"))
    if cfg["output"]["figures"] and len(result.history):
        from .report import plot_history

        plot_history(result.history, os.path.join(out, "history.png"),
                     title=f"{problem.name} (width {net.width})")
    print(f"best validation relative error: {result.best_val_error:.6e}")
    return code


def _eval_keys(cfg, net, m_eval):
    return {
        "problem": cfg["problem"]["kind"],
        "variant": cfg["problem"]["variant"],
        "m_train": net.input_dim - 1,
        "m_eval": m_eval,
        "seed": cfg["sampler"]["seed"],
    }


def _write_keyed_csv(path, keys, extra_cols):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*keys.keys(), *extra_cols.keys()])
        writer.writerow([*keys.values(),
                         *(repr(v) if isinstance(v, float) else v for v in extra_cols.values())])


def _cmd_eval(cfg, args) -> int:
    import numpy as np

    from .config import ConfigError
    from .evaluation import (
        cross_degree_eval,
        derivative_error_at_zero,
        l1_errors,
        second_derivative_fd,
        second_derivative_kernel,
    )
    from .network import forward, load_checkpoint
    from .training import latin_hypercube

    what = [w.strip() for w in args.what.split(",") if w.strip()]
    known = {"errors", "derivative", "second_order", "cross_degree"}
    unknown = set(what) - known
    if unknown:
        raise ConfigError(f"unknown eval modes {sorted(unknown)}; known: {sorted(known)}")

    problem = cfg.build_problem()
    try:
        net = load_checkpoint(args.checkpoint)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad checkpoint: {exc}") from None
    if net.input_dim != problem.dim + 1 or net.width != cfg["network"]["width"]:
        raise ConfigError(
            f"checkpoint architecture (m={net.input_dim - 1}, width={net.width}) does not match "
            f"config (m={problem.dim}, width={cfg['network']['width']})"
        )
    out = _outdir(cfg)
    figures = cfg["output"]["figures"]
    t_eval = args.t if args.t is not None else problem.t_range[1]

    for mode in what:
        if mode == "errors":
            pts = latin_hypercube(cfg["sampler"]["n_points"], problem.sampler_ranges,
                                  cfg["sampler"]["seed"])
            truth = np.asarray(problem.analytic(pts[:, 1:], pts[:, 0]), dtype=float)
            pred = np.asarray(forward(net, pts.astype(net.dtype)), dtype=float)
            rep = l1_errors(pred, truth, keep_details=True)
            _write_keyed_csv(os.path.join(out, "errors.csv"),
                             _eval_keys(cfg, net, problem.dim),
                             {"n_points": rep.n_points, "n_excluded": rep.n_excluded,
                              "mean_rel": rep.mean_rel, "mean_abs": rep.mean_abs})
            if figures:
                from .report import plot_error_histogram

                plot_error_histogram(rep.per_point_abs, rep.per_point_rel,
                                     os.path.join(out, "errors_hist.png"),
                                     title=f"{problem.name} test errors")
            print(f"errors: mean_rel {rep.mean_rel:.6e}  mean_abs {rep.mean_abs:.6e} "
                  f"({rep.n_excluded} excluded)")
        elif mode == "derivative":
            x_grid = np.linspace(*problem.spec.domain, 201)
            rep = derivative_error_at_zero(net, problem, t_eval, x_grid, keep_details=True)
            import csv

            with open(os.path.join(out, "derivative.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "abs_err", "rel_err"])
                for xi, ae, re_ in zip(x_grid, rep.per_point_abs, rep.per_point_rel):
                    writer.writerow([repr(float(xi)), repr(float(ae)), repr(float(re_))])
            if figures:
                from .report import plot_derivative_error

                plot_derivative_error(x_grid, rep.per_point_abs, rep.per_point_rel,
                                      os.path.join(out, "derivative_error.png"))
            print(f"derivative at zero (t={t_eval:g}): mean_rel {rep.mean_rel:.6e} "
                  f"mean_abs {rep.mean_abs:.6e}")
        elif mode == "second_order":
            m = problem.dim
            hess = second_derivative_fd(net, np.zeros(m), t_eval, args.fd_step)
            truth_h = problem.hessian(t_eval) if problem.hessian is not None else np.zeros((m, m))
            grid = np.linspace(*problem.spec.domain, 41)
            pred_k = second_derivative_kernel(hess, problem.spec, grid, grid)
            truth_k = second_derivative_kernel(truth_h, problem.spec, grid, grid)
            import csv

            with open(os.path.join(out, "second_order.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "y", "pred", "truth", "abs_err"])
                for i, xi in enumerate(grid):
                    for j, yj in enumerate(grid):
                        writer.writerow([repr(float(xi)), repr(float(yj)),
                                         repr(float(pred_k[i, j])), repr(float(truth_k[i, j])),
                                         repr(abs(float(pred_k[i, j] - truth_k[i, j])))])
            if figures:
                from .report import plot_kernel_heatmap

                plot_kernel_heatmap(grid, grid, np.abs(pred_k - truth_k),
                                    os.path.join(out, "second_order_error.png"))
            print(f"second_order (t={t_eval:g}): max kernel abs err "
                  f"{np.abs(pred_k - truth_k).max():.6e}")
        else:  # cross_degree
            m_eval = args.eval_degree if args.eval_degree is not None else problem.dim
            eval_cfg = cfg.with_overrides()
            eval_cfg.values["problem"]["degree"] = m_eval
            eval_problem = eval_cfg.build_problem()
            try:
                rep = cross_degree_eval(net, eval_problem, cfg["sampler"]["n_points"],
                                        cfg["sampler"]["seed"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            _write_keyed_csv(os.path.join(out, "cross_degree.csv"),
                             _eval_keys(cfg, net, m_eval),
                             {"n_points": rep.n_points, "n_excluded": rep.n_excluded,
                              "mean_rel": rep.mean_rel, "mean_abs": rep.mean_abs})
            print(f"cross_degree m'={m_eval}: mean_rel {rep.mean_rel:.6e} "
                  f"mean_abs {rep.mean_abs:.6e}")
    cfg.write(os.path.join(out, "eval-manifest.ini"), _manifest(cfg, "eval"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
