"""Shipped run presets.

Full-scale presets carry the tuned hyperparameters of the reference
experiments verbatim (learning rate, weight decay, cosine-restart cycle,
warmup milestone, loss choice, width, iteration count).  The ``*-desk``
presets are small-budget configurations sized for CPU runs and the
acceptance suite.
"""

from __future__ import annotations

_FTE_COMMON = {"problem.kind": "fte", "training.batch_size": 1024,
               "network.width": 1024, "training.iterations": 500_000}
_BHE_COMMON = {"problem.kind": "bhe", "training.batch_size": 1024,
               "network.width": 2048, "training.iterations": 300_000}


def _preset(common, variant, degree, lr, wd, t0, t_mult, milestone, loss="smooth_l1"):
    out = dict(common)
    out.update({
        "problem.variant": variant,
        "problem.degree": degree,
        "training.learning_rate": lr,
        "training.weight_decay": wd,
        "training.t_0": t0,
        "training.t_mult": t_mult,
        "training.milestone": milestone,
        "training.loss": loss,
    })
    return out


PRESETS: dict[str, dict] = {
    # transport problem, linear initial condition
    "fte-deg4-linear": _preset(_FTE_COMMON, "linear", 4, 8.675e-6, 4.534e-6, 250_000, 2, 0),
    "fte-deg20-linear": _preset(_FTE_COMMON, "linear", 20, 1.878e-5, 6.184e-7, 500_000, 1, 5000),
    "fte-deg100-linear": _preset(_FTE_COMMON, "linear", 100, 2.839e-5, 2.008e-5, 500_000, 1, 0),
    # transport problem, nonlinear initial condition (headline runs)
    "fte-deg4-nonlinear": _preset(_FTE_COMMON, "nonlinear", 4, 8.456e-6, 0.0, 500_000, 1, 5000,
                                  loss="l1_plus_linf"),
    "fte-deg100-nonlinear": _preset(_FTE_COMMON, "nonlinear", 100, 1.042e-5, 0.0, 500_000, 1, 0,
                                    loss="l1_plus_linf"),
    "fte-deg1000-nonlinear": _preset(_FTE_COMMON, "nonlinear", 1000, 1.130e-5, 0.0, 250_000, 1, 5000,
                                     loss="l1_plus_linf"),
    # transport problem, nonlinear initial condition (cross-degree runs)
    "fte-deg4-nonlinear-alt": _preset(_FTE_COMMON, "nonlinear", 4, 4.837e-6, 8.637e-5, 250_000, 2, 0),
    "fte-deg10-nonlinear-alt": _preset(_FTE_COMMON, "nonlinear", 10, 5.810e-5, 2.877e-5, 500_000, 2, 50_000),
    "fte-deg20-nonlinear-alt": _preset(_FTE_COMMON, "nonlinear", 20, 6.076e-6, 2.068e-7, 500_000, 2, 50_000),
    # Burgers-Hopf problem
    "bhe-deg4-delta": _preset(_BHE_COMMON, "delta", 4, 6.680e-5, 4.429e-6, 300_000, 2, 0),
    "bhe-deg20-delta": _preset(_BHE_COMMON, "delta", 20, 1.372e-4, 6.644e-7, 300_000, 1, 0),
    "bhe-deg100-delta": _preset(_BHE_COMMON, "delta", 100, 1.204e-4, 4.893e-7, 150_000, 1, 3000),
    "bhe-deg4-constant": _preset(_BHE_COMMON, "constant", 4, 5.131e-5, 1.083e-5, 300_000, 2, 3000),
    "bhe-deg20-constant": _preset(_BHE_COMMON, "constant", 20, 9.989e-5, 1.372e-4, 150_000, 1, 3000),
    "bhe-deg100-constant": _preset(_BHE_COMMON, "constant", 100, 8.637e-5, 8.378e-5, 300_000, 1, 30_000),
    "bhe-deg4-moderate": _preset(_BHE_COMMON, "moderate", 4, 2.248e-5, 3.669e-5, 300_000, 1, 3000),
    "bhe-deg20-moderate": _preset(_BHE_COMMON, "moderate", 20, 3.254e-5, 1.771e-6, 300_000, 2, 0),
    "bhe-deg100-moderate": _preset(_BHE_COMMON, "moderate", 100, 1.209e-5, 1.423e-6, 300_000, 1, 0),
}

# Desk-scale presets: CPU-sized budgets used by the acceptance suite.
_DESK = {
    "fte-deg4-linear-desk": {
        "problem.kind": "fte", "problem.variant": "linear", "problem.degree": 4,
        "network.width": 256, "training.iterations": 50_000, "training.batch_size": 1024,
        "training.learning_rate": 2e-3, "training.weight_decay": 1e-6,
        "training.t_0": 49_000, "training.t_mult": 1, "training.milestone": 1000,
        "training.loss": "smooth_l1",
    },
    "bhe-deg4-delta-desk": {
        "problem.kind": "bhe", "problem.variant": "delta", "problem.degree": 4,
        "network.width": 512, "training.iterations": 50_000, "training.batch_size": 1024,
        "training.learning_rate": 1e-3, "training.weight_decay": 1e-6,
        "training.t_0": 49_000, "training.t_mult": 1, "training.milestone": 1000,
        "training.loss": "smooth_l1",
    },
    "bhe-deg20-delta-desk": {
        "problem.kind": "bhe", "problem.variant": "delta", "problem.degree": 20,
        "network.width": 192, "training.iterations": 8000, "training.batch_size": 1024,
        "training.learning_rate": 1e-3, "training.weight_decay": 1e-6,
        "training.t_0": 7500, "training.t_mult": 1, "training.milestone": 500,
        "training.loss": "smooth_l1",
    },
    "fte-deg20-linear-desk": {
        "problem.kind": "fte", "problem.variant": "linear", "problem.degree": 20,
        "network.width": 192, "training.iterations": 15_000, "training.batch_size": 1024,
        "training.learning_rate": 2e-3, "training.weight_decay": 1e-6,
        "training.t_0": 14_000, "training.t_mult": 1, "training.milestone": 1000,
        "training.loss": "smooth_l1",
    },
    "fte-deg100-linear-desk": {
        "problem.kind": "fte", "problem.variant": "linear", "problem.degree": 100,
        "network.width": 192, "training.iterations": 15_000, "training.batch_size": 1024,
        "training.learning_rate": 2e-3, "training.weight_decay": 1e-6,
        "training.t_0": 14_000, "training.t_mult": 1, "training.milestone": 1000,
        "training.loss": "smooth_l1",
    },
}
PRESETS.update(_DESK)


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
