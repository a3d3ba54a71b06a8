"""Training recipe: sampling, losses, reweighting, optimizer, schedule, loop.

The loop draws a fresh Latin-hypercube batch every iteration, evaluates the
reweighted residual + initial-condition loss through the network engine,
steps AdamW on a warmup + cosine-restart schedule, and tracks the best
parameters by validation relative error on a fixed held-out set.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels
from .network import LossWorkspace, Mlp, _loss_backward

if TYPE_CHECKING:
    from .problems import PdeProblem


class LossKind(enum.Enum):
    SMOOTH_L1 = "smooth_l1"
    L1_PLUS_LINF = "l1_plus_linf"


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warmup to the base rate, then cosine annealing with restarts."""

    milestone: int = 0
    t0: int = 50_000
    t_mult: int = 1
    start_factor: float = 1e-10
    eta_min: float = 0.0

    def __post_init__(self):
        if self.t0 < 1 or self.t_mult < 1 or self.milestone < 0:
            raise ValueError("schedule needs t0 >= 1, t_mult >= 1, milestone >= 0")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    learning_rate: float
    weight_decay: float = 0.0
    batch_size: int = 1024
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss_kind: LossKind = LossKind.SMOOTH_L1
    reweight_temperature: float = 0.25
    regularize_zero_input: bool = False
    seed: int = 0
    val_interval: int = 1000
    val_points: int = 4096

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative")
        if self.iterations and self.schedule.milestone >= self.iterations:
            raise ValueError("schedule milestone must be < iterations")


@dataclass(frozen=True)
class SamplerConfig:
    n_points: int
    t_range: tuple[float, float]
    a_ranges: tuple[tuple[float, float], ...]
    quadratic_decay: bool = False
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.t_range, *self.a_ranges):
            if not hi > lo:
                raise ValueError(f"empty sampling interval ({lo}, {hi})")

    @property
    def ranges(self) -> list[tuple[float, float]]:
        return [self.t_range, *self.a_ranges]

    @classmethod
    def for_problem(cls, problem: "PdeProblem", n_points: int, seed: int = 0) -> "SamplerConfig":
        from .basis import BasisFamily

        return cls(
            n_points=n_points,
            t_range=problem.t_range,
            a_ranges=tuple(problem.a_ranges),
            quadratic_decay=problem.spec.family is BasisFamily.FOURIER_PERIODIC,
            seed=seed,
        )


def latin_hypercube(n: int, ranges, seed) -> np.ndarray:
    """n stratified samples: per coordinate, one point in each of the n
    equal-width strata, with independently shuffled stratum assignments.

    ``seed`` may be an integer or a numpy Generator (consumed in coordinate
    order: one permutation then one uniform draw per coordinate).
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.empty((n, len(ranges)))
    for j, (lo, hi) in enumerate(ranges):
        perm = rng.permutation(n)
        u = rng.random(n)
        out[:, j] = lo + (perm + u) * ((hi - lo) / n)
    return out


def decayed_ranges(base: tuple[float, float], m: int) -> list[tuple[float, float]]:
    """Per-coefficient sampling boxes [-c, c] / (k+1)^2 for k = 0..m-1."""
    lo, hi = base
    c = float(hi)
    if c <= 0 or abs(lo + hi) > 1e-15:
        raise ValueError(f"base range must be symmetric [-c, c] with c > 0, got {base}")
    return [(-c / (k + 1) ** 2, c / (k + 1) ** 2) for k in range(m)]


def softmax_reweight(losses, temperature: float = 0.25) -> np.ndarray:
    """Scale-invariant softmax weights over a list of non-negative losses.

    The losses are normalized by their maximum before the softmax, so the
    weights depend only on loss ratios; callers treat the weights as
    constants (no gradient flows through them).
    """
    ls = np.asarray(losses, dtype=float)
    if ls.ndim != 1 or ls.shape[0] < 2:
        raise ValueError("need at least two loss terms")
    if (ls < 0).any():
        raise ValueError("losses must be non-negative")
    ts = ls / (ls.max() + np.finfo(float).eps)
    z = np.exp(ts / temperature - (ts / temperature).max())
    return z / z.sum()


def loss_terms(kind: LossKind, predictions, targets) -> float:
    """Elementwise training loss: smooth-L1 (beta=1) or mean|d| + max|d|."""
    d = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    if d.size == 0:
        raise ValueError("empty loss input")
    if not np.isfinite(d).all():
        raise FloatingPointError("non-finite loss input")
    if kind is LossKind.SMOOTH_L1:
        absd = np.abs(d)
        return float(np.where(absd < 1.0, 0.5 * d * d, absd - 0.5).mean())
    absd = np.abs(d)
    return float(absd.mean() + absd.max())


@dataclass
class AdamWState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(params, grads, state: AdamWState, lr, weight_decay,
               beta1=0.9, beta2=0.999, eps=1e-8):
    """One decoupled-weight-decay Adam update, in place.

    Decay shrinks parameters by exactly (1 - lr * weight_decay) independent
    of the adaptive step; moments use the standard bias correction.
    """
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        _kernels.adamw_update(
            p.reshape(-1), grads[name].reshape(-1),
            state.m[name].reshape(-1), state.v[name].reshape(-1),
            lr, weight_decay, beta1, beta2, eps, bc1, bc2,
        )
    return params, state


def lr_at(iteration: int, schedule: ScheduleConfig, base_lr: float) -> float:
    """Learning rate at an iteration: linear warmup from base_lr*start_factor
    over [0, milestone), then cosine annealing with warm restarts (cycle
    lengths t0, t0*t_mult, ...)."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    ms = schedule.milestone
    if ms > 0 and iteration < ms:
        frac = iteration / ms
        return base_lr * (schedule.start_factor + (1.0 - schedule.start_factor) * frac)
    s = iteration - ms
    cycle = schedule.t0
    while s >= cycle:
        s -= cycle
        cycle *= schedule.t_mult
    return schedule.eta_min + (base_lr - schedule.eta_min) * 0.5 * (1.0 + math.cos(math.pi * s / cycle))


@dataclass
class TrainHistory:
    """Per-iteration log; val_rel_error is NaN except on validation rows."""

    iteration: np.ndarray
    total_loss: np.ndarray
    residual_loss: np.ndarray
    boundary_loss: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    lr: np.ndarray
    val_rel_error: np.ndarray

    COLUMNS = ("iteration", "total_loss", "residual_loss", "boundary_loss",
               "lambda1", "lambda2", "lr", "val_rel_error")

    def __len__(self):
        return len(self.iteration)

    def rows(self):
        for i in range(len(self)):
            yield tuple(getattr(self, c)[i] for c in self.COLUMNS)

    def write_csv(self, path) -> None:
        """Deterministic CSV: ints for iteration, repr floats, blank NaNs."""
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows():
                out = [int(row[0])]
                out += ["" if math.isnan(v) else repr(float(v)) for v in row[1:]]
                writer.writerow(out)


@dataclass
class TrainResult:
    best_net: Mlp
    final_net: Mlp
    history: TrainHistory
    best_val_error: float
    final_val_error: float


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries the last good state."""

    def __init__(self, message: str, iteration: int, result: TrainResult):
        super().__init__(message)
        self.iteration = iteration
        self.result = result


def validation_error(net: Mlp, problem: "PdeProblem", points: np.ndarray,
                     truth: np.ndarray, guard: float = 1e-12) -> float:
    """Mean L1 relative error of the network on precomputed validation truth."""
    from .network import forward

    pred = np.asarray(forward(net, points.astype(net.dtype)), dtype=float)
    keep = np.abs(truth) >= guard
    if not keep.any():
        return float(np.abs(pred - truth).mean())
    return float((np.abs(pred - truth)[keep] / np.abs(truth)[keep]).mean())


def train(problem: "PdeProblem", net: Mlp, tcfg: TrainConfig,
          scfg: SamplerConfig | None = None) -> TrainResult:
    """Run the full training recipe; returns the best-validation and final
    networks plus the per-iteration history.

    Deterministic: identical (problem, initial net, configs) give identical
    histories and parameters for a fixed thread count.
    """
    if scfg is None:
        scfg = SamplerConfig.for_problem(problem, tcfg.batch_size, tcfg.seed)
    if len(scfg.a_ranges) != problem.dim:
        raise ValueError("sampler has wrong coefficient dimension for the problem")
    ranges = scfg.ranges
    rng = np.random.default_rng(scfg.seed)

    val_pts = latin_hypercube(tcfg.val_points, ranges, scfg.seed + 1)
    val_truth = np.asarray(problem.analytic(val_pts[:, 1:], val_pts[:, 0]), dtype=float)

    n_it = tcfg.iterations
    hist = TrainHistory(*(np.full(n_it, np.nan) for _ in TrainHistory.COLUMNS))
    hist.iteration = np.arange(n_it, dtype=float)

    ws = LossWorkspace(net, tcfg.batch_size, tcfg.regularize_zero_input)
    state = AdamWState.init(net.params)

    best_net = net.copy()
    best_val = math.inf
    last_val = math.nan

    def validate(it):
        nonlocal best_val, best_net, last_val
        err = validation_error(net, problem, val_pts, val_truth)
        last_val = err
        if it >= 0:
            hist.val_rel_error[it] = err
        if err < best_val:
            best_val = err
            best_net = net.copy()
        return err

    for it in range(n_it):
        pts = latin_hypercube(tcfg.batch_size, ranges, rng)
        try:
            parts, grads = _loss_backward(net, pts, problem, tcfg, ws)
        except FloatingPointError as exc:
            result = TrainResult(best_net, net.copy(), _truncate(hist, it), best_val, last_val)
            raise TrainingDiverged(f"loss diverged at iteration {it}: {exc}", it, result) from exc
        lr = lr_at(it, tcfg.schedule, tcfg.learning_rate)
        adamw_step(net.params, grads, state, lr, tcfg.weight_decay)
        hist.total_loss[it] = parts.total
        hist.residual_loss[it] = parts.residual
        hist.boundary_loss[it] = parts.boundary
        hist.lambda1[it] = parts.weights[0]
        hist.lambda2[it] = parts.weights[1]
        hist.lr[it] = lr
        if (it + 1) % tcfg.val_interval == 0:
            validate(it)
    if n_it > 0 and n_it % tcfg.val_interval != 0:
        validate(n_it - 1)
    if n_it == 0:
        best_net = net.copy()
        best_val = math.nan
    return TrainResult(best_net, net.copy(), hist, best_val, last_val)


def _truncate(hist: TrainHistory, n: int) -> TrainHistory:
    return TrainHistory(*(getattr(hist, c)[:n].copy() for c in TrainHistory.COLUMNS))


def sample_problem_points(problem: "PdeProblem", n: int, seed: int) -> np.ndarray:
    """LHS draw of (t, a) points over the problem's sampling box."""
    return latin_hypercube(n, problem.sampler_ranges, seed)
