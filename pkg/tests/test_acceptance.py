"""Acceptance criteria, one test per criterion, in order.

Each test prints one PASS/FAIL line (run with -s to stream them).  The
training-based criteria (5, 6, 7, 10) dominate the runtime: on a small CPU
the whole suite is a multi-hour run, most of it criterion 6, whose stated
45-minute budget assumes a multi-core workstation.
"""

import hashlib
import time

import numpy as np
import pytest

from cylinfde.basis import (
    BasisFamily,
    BasisSpec,
    CoefficientVector,
    basis_matrix,
    fourier_spec,
    gauss_legendre,
)
from cylinfde.config import RunConfig
from cylinfde.cylindrical import FunctionalOracle, convergence_study
from cylinfde.evaluation import cross_degree_eval, derivative_error_at_zero, l1_errors
from cylinfde.network import Mlp, forward, input_gradient, _loss_backward
from cylinfde.presets import get_preset
from cylinfde.problems import (
    BheConfig,
    CovarianceKind,
    FteConfig,
    analytic_partials,
    bhe_eigenvalues,
    bhe_problem,
    fte_problem,
)
from cylinfde.training import (
    LossKind,
    ScheduleConfig,
    TrainConfig,
    latin_hypercube,
    train,
)

TEST_SET_SEED = 777


def report(criterion, ok, detail):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)


def lhs_test_set(problem, n=10_000, seed=TEST_SET_SEED):
    pts = latin_hypercube(n, problem.sampler_ranges, seed)
    truth = np.asarray(problem.analytic(pts[:, 1:], pts[:, 0]), dtype=float)
    return pts, truth


def rel_error_of(net, problem, n=10_000, seed=TEST_SET_SEED):
    pts, truth = lhs_test_set(problem, n, seed)
    pred = np.asarray(forward(net, pts.astype(net.dtype)), dtype=float)
    return l1_errors(pred, truth)


def train_preset(name, seed=0, reg=None):
    cfg = RunConfig.from_mapping(get_preset(name)).with_overrides(seed=seed)
    if reg is not None:
        cfg.values["training"]["regularize_zero_input"] = reg
    problem = cfg.build_problem()
    net = cfg.build_network()
    result = train(problem, net, cfg.build_train_config(), cfg.build_sampler_config(problem))
    return problem, result


def test_c01_basis_correctness():
    t0 = time.perf_counter()
    worst_gram = 0.0
    for family in BasisFamily:
        spec = BasisSpec(family, 64)
        quad = gauss_legendre(256).rescaled(*spec.domain)
        phi = basis_matrix(spec, quad.nodes)
        gram = phi.T @ (quad.weights[:, None] * phi)
        worst_gram = max(worst_gram, np.abs(gram - np.eye(64)).max())
    spec = fourier_spec(64)
    grid = np.linspace(-0.5, 0.5, 257)
    phi = basis_matrix(spec, grid)
    d2 = basis_matrix(spec, grid, derivative=2)
    lam = bhe_eigenvalues(64)
    worst_eig = np.abs(d2 - lam * phi).max()
    elapsed = time.perf_counter() - t0
    ok = worst_gram < 1e-10 and worst_eig < 1e-9 and elapsed < 5.0
    report(1, ok, f"orthonormality {worst_gram:.2e} (<1e-10), eigenrelation "
                  f"{worst_eig:.2e} (<1e-9), {elapsed:.2f}s (<5s)")
    assert worst_gram < 1e-10
    assert worst_eig < 1e-9
    assert elapsed < 5.0


def test_c02_analytic_solution_residuals():
    t0 = time.perf_counter()
    cases = []
    for m in (4, 20, 100, 1000):
        cases.append(fte_problem(FteConfig.linear(m)))
        cases.append(fte_problem(FteConfig.nonlinear(m)))
    for m in (4, 20, 100):
        for kind in CovarianceKind:
            cases.append(bhe_problem(BheConfig.build(m, kind)))
    worst = 0.0
    for problem in cases:
        pts = latin_hypercube(10_000, problem.sampler_ranges, seed=5)
        df_dt, df_da = analytic_partials(problem, pts[:, 1:], pts[:, 0])
        res = problem.residual(pts[:, 0], pts[:, 1:], df_dt, df_da)
        worst = max(worst, float(np.abs(res).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 60.0
    report(2, ok, f"{len(cases)} problem instances, worst |residual| {worst:.2e} "
                  f"(<1e-9), {elapsed:.1f}s (<60s)")
    assert worst < 1e-9
    assert elapsed < 60.0


def test_c03_convergence_study():
    t0 = time.perf_counter()
    problem = bhe_problem(BheConfig.delta(1000))
    tau = problem.t_range[1]
    spec = problem.spec
    oracle = FunctionalOracle(spec, lambda cv: float(problem.analytic(cv.values, tau)))
    box = latin_hypercube(100, problem.a_ranges, seed=3)  # decaying 1/(k+1)^2
    thetas = [CoefficientVector(row, spec) for row in box]
    degrees = [4, 8, 16, 32, 64, 128, 256, 512]
    table = convergence_study(oracle, degrees, thetas)
    errs = table.errors()
    elapsed = time.perf_counter() - t0
    monotone = bool(np.all(np.diff(errs) <= 0))
    decade = errs[-1] <= errs[0] / 10
    ok = monotone and decade and elapsed < 120.0
    report(3, ok, f"errors {errs[0]:.2e} -> {errs[-1]:.2e}, monotone={monotone}, "
                  f">=10x decay={decade}, {elapsed:.1f}s (<2min)")
    assert monotone
    assert decade
    assert elapsed < 120.0


def _fd_input_gradient_check(net, x, tol):
    # relative 1e-4; entries below 1e-6 in magnitude are compared absolutely
    # at tol*1e-6, which sits well above the h=1e-5 difference noise (~1e-11)
    g = input_gradient(net, x)
    h = 1e-5
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        fd = (forward(net, x + e) - forward(net, x - e)) / (2 * h)
        if abs(g[k] - fd) > tol * max(abs(fd), 1e-6):
            return False, f"input grad[{k}]: {g[k]:.6e} vs fd {fd:.6e}"
    return True, ""


def _fd_loss_gradient_check(net, pts, problem, cfg, rng, tol):
    parts, grads = _loss_backward(net, pts, problem, cfg)
    lam = np.array(parts.weights)
    grads = {k: v.copy() for k, v in grads.items()}

    def frozen():
        p, _ = _loss_backward(net, pts, problem, cfg)
        return float(np.dot(lam, [p.residual, p.boundary]))

    for name, p in net.params.items():
        flat = p.reshape(-1)
        gref = grads[name].reshape(-1)
        idxs = rng.choice(flat.size, size=min(8, flat.size), replace=False)
        for i in idxs:
            old = flat[i]
            flat[i] = old + 1e-7
            lp = frozen()
            flat[i] = old - 1e-7
            lm = frozen()
            flat[i] = old
            fd = (lp - lm) / 2e-7
            # noise of the h=1e-7 central difference is ~1e-9 in loss units,
            # so magnitudes below 1e-4 are compared absolutely at tol*1e-4
            if abs(gref[i] - fd) > tol * max(abs(fd), 1e-4):
                return False, f"{name}[{i}]: {gref[i]:.6e} vs fd {fd:.6e}"
    return True, ""


def test_c04_autodiff_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    tol = 1e-4
    checked = 0
    for case in range(20):
        m = int(rng.choice([1, 2, 5]))
        width = int(rng.choice([4, 8]))
        if case % 2 == 0:
            problem = fte_problem(FteConfig.nonlinear(m))
        else:
            problem = bhe_problem(BheConfig.delta(2 * max(1, m // 2)))
        md = problem.dim
        net = Mlp.init(md + 1, width, dtype=np.float64, seed=case)
        x = np.concatenate(([rng.uniform(*problem.t_range)],
                            [rng.uniform(lo, hi) for lo, hi in problem.a_ranges]))
        ok, msg = _fd_input_gradient_check(net, x, tol)
        assert ok, f"config {case} (m={md}, W={width}): {msg}"
        pts = latin_hypercube(8, problem.sampler_ranges, seed=case)
        cfg = TrainConfig(iterations=1, learning_rate=1e-3,
                          loss_kind=LossKind.SMOOTH_L1,
                          schedule=ScheduleConfig(milestone=0, t0=10))
        ok, msg = _fd_loss_gradient_check(net, pts, problem, cfg, rng, tol)
        assert ok, f"config {case} (m={md}, W={width}): {msg}"
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = checked == 20 and elapsed < 30.0
    report(4, ok, f"{checked}/20 configurations within 1e-4 relative, "
                  f"{elapsed:.1f}s (<30s)")
    assert checked == 20
    assert elapsed < 30.0


def test_c05_fte_desk_training():
    t0 = time.perf_counter()
    problem, result = train_preset("fte-deg4-linear-desk")
    rep = rel_error_of(result.best_net, problem)
    elapsed = time.perf_counter() - t0
    ok = rep.mean_rel <= 1e-2
    report(5, ok, f"m=4 linear, W=256, 50k iters: test mean_rel {rep.mean_rel:.3e} "
                  f"(<=1e-2; paper-scale reference 1.27e-3), {elapsed/60:.1f} min")
    assert rep.mean_rel <= 1e-2


def test_c06_bhe_desk_training():
    t0 = time.perf_counter()
    problem, result = train_preset("bhe-deg4-delta-desk")
    rep = rel_error_of(result.best_net, problem)
    elapsed = time.perf_counter() - t0
    budget = 45 * 60
    ok = rep.mean_rel <= 5e-3 and elapsed <= budget
    report(6, ok, f"m=4 delta, W=512, 50k iters: test mean_rel {rep.mean_rel:.3e} "
                  f"(<=5e-3; paper-scale reference 2.94e-4), runtime "
                  f"{elapsed/60:.1f} min (<=45 min)")
    assert rep.mean_rel <= 5e-3
    assert elapsed <= budget, (
        f"runtime {elapsed/60:.1f} min exceeds the 45 min budget; this box "
        f"sustains ~200 GF/s over 2 cores while the 50k-iteration criterion "
        f"needs ~350+ GF/s to fit the budget (see decisions ledger)"
    )


def test_c07_zero_input_regularizer_effect():
    t0 = time.perf_counter()
    errs = {True: [], False: []}
    for seed in (0, 1, 2):
        for reg in (False, True):
            problem, result = train_preset("bhe-deg20-delta-desk", seed=seed, reg=reg)
            grid = np.linspace(*problem.spec.domain, 201)
            rep = derivative_error_at_zero(result.best_net, problem,
                                           problem.t_range[1], grid)
            errs[reg].append(rep.mean_rel)
    mean_reg = float(np.mean(errs[True]))
    mean_no = float(np.mean(errs[False]))
    elapsed = time.perf_counter() - t0
    ok = mean_reg * 3 <= mean_no
    report(7, ok, f"derivative rel err at zero over 3 seeds: with regularizer "
                  f"{mean_reg:.3e}, without {mean_no:.3e} (need >=3x; paper ~10x), "
                  f"{elapsed/60:.1f} min")
    assert mean_reg * 3 <= mean_no


def test_c08_iteration_cost_scaling():
    from cylinfde.network import LossWorkspace

    times = {}
    for m in (10, 100):
        problem = fte_problem(FteConfig.linear(m))
        net = Mlp.init(m + 1, 256, dtype=np.float32, seed=0)
        cfg = TrainConfig(iterations=1, learning_rate=1e-3, batch_size=1024,
                          schedule=ScheduleConfig(milestone=0, t0=10))
        ws = LossWorkspace(net, 1024, False)
        rng = np.random.default_rng(0)
        for _ in range(3):
            pts = latin_hypercube(1024, problem.sampler_ranges, rng)
            _loss_backward(net, pts, problem, cfg, ws)
        reps = []
        for _ in range(30):
            pts = latin_hypercube(1024, problem.sampler_ranges, rng)
            t0 = time.perf_counter()
            _loss_backward(net, pts, problem, cfg, ws)
            reps.append(time.perf_counter() - t0)
        times[m] = float(np.median(reps))
    ratio = times[100] / times[10]
    ok = ratio <= 15.0
    report(8, ok, f"per-iteration time m=100/m=10 at W=256: "
                  f"{times[100]*1e3:.1f}ms/{times[10]*1e3:.1f}ms = {ratio:.2f}x (<=15x)")
    assert ratio <= 15.0


def test_c09_determinism(tmp_path):
    from cylinfde.cli import EXIT_OK, main

    cfg_text = """
[problem]
kind = bhe
variant = delta
degree = 4

[network]
width = 32

[training]
iterations = 150
learning_rate = 1e-3
batch_size = 128
val_interval = 50
val_points = 256

[sampler]
n_points = 500

[output]
directory = {out}
figures = false
"""
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        cfg_path = tmp_path / f"{run}.ini"
        cfg_path.write_text(cfg_text.format(out=out))
        assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
        assert main(["eval", "--config", str(cfg_path), "--checkpoint",
                     str(out / "best.ckpt"), "--what", "errors"]) == EXIT_OK
        assert main(["converge", "--config", str(cfg_path), "--degrees", "4,8",
                     "--reference-degree", "32", "--n-thetas", "20"]) == EXIT_OK
        files = ("best.ckpt", "final.ckpt", "history.csv", "errors.csv", "converge.csv")
        digests.append({f: hashlib.sha256((out / f).read_bytes()).hexdigest()
                        for f in files})
    ok = digests[0] == digests[1]
    report(9, ok, f"re-run hash comparison over {len(digests[0])} artifacts: "
                  f"{'identical' if ok else 'MISMATCH'}")
    assert digests[0] == digests[1]


def test_c10_cross_degree_table():
    t0 = time.perf_counter()
    desk_budget = 5e-2  # diagonal target for the short desk runs below
    nets = {}
    problems = {}
    for m, preset in ((4, "fte-deg4-linear-c10"), (20, "fte-deg20-linear-desk"),
                      (100, "fte-deg100-linear-desk")):
        if preset == "fte-deg4-linear-c10":
            # same budget shape as the other rows, sized for m=4
            flat = get_preset("fte-deg20-linear-desk")
            flat["problem.degree"] = 4
            cfg = RunConfig.from_mapping(flat)
        else:
            cfg = RunConfig.from_mapping(get_preset(preset))
        problem = cfg.build_problem()
        net = cfg.build_network()
        result = train(problem, net, cfg.build_train_config(),
                       cfg.build_sampler_config(problem))
        nets[m] = result.best_net
        problems[m] = problem
    table = {}
    for m_eval in (4, 20, 100):
        for m_train in (4, 20, 100):
            rep = cross_degree_eval(nets[m_train], problems[m_eval],
                                    n_points=10_000, seed=TEST_SET_SEED)
            table[(m_eval, m_train)] = rep.mean_rel
    elapsed = time.perf_counter() - t0
    lines = ["eval\\train      4         20        100"]
    for m_eval in (4, 20, 100):
        row = " ".join(f"{table[(m_eval, mt)]:.3e}" for mt in (4, 20, 100))
        lines.append(f"  {m_eval:>4}      {row}")
    diag_ok = all(table[(m, m)] <= desk_budget for m in (4, 20, 100))
    row4 = [table[(4, mt)] for mt in (4, 20, 100)]
    worst_ok = table[(4, 100)] == max(row4)
    ok = diag_ok and worst_ok
    report(10, ok, "3x3 table below; diagonals <= %.0e: %s; train-100/eval-4 "
           "worst in its row: %s (%.1f min)\n%s"
           % (desk_budget, diag_ok, worst_ok, elapsed / 60, "\n".join(lines)))
    assert diag_ok, lines
    assert worst_ok, lines
