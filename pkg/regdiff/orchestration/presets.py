import copy
from typing import Any

from regdiff.errors import ConfigParse

# Raw configuration documents, validated by the loader like any TOML file
PRESETS: dict[str, dict[str, Any]] = {
    "bias-1d": {
        "name": "bias-1d",
        "task": "bias",
        "output": "results/bias-1d",
        "network": {"n_agents": 1, "topology": "complete", "rule": "uniform-averaging"},
        "problem": {"dimension": 1},
        "agents": [
            {
                "risk": {"kind": "quadratic", "hessian": [[1.0]], "linear": [2.0]},
                "regularizer": {"kind": "l1", "rho": 1.0},
            }
        ],
        "algorithm": {"mu": 0.05, "delta": 0.1, "iterations": 0},
        "metrics": {"target": "nonsmooth"},
        "verification": {"deltas": [1e-1, 1e-2, 1e-3, 1e-4]},
    },
    "bias-group": {
        "name": "bias-group",
        "task": "bias",
        "output": "results/bias-group",
        "network": {"n_agents": 4, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 10, "seed": 3},
        "agents": [
            {
                "risk": {"kind": "quadratic", "eigen_range": [1.0, 3.0]},
                "regularizer": {"kind": "group_l1", "rho": 1.0, "indices": [0, 1, 2, 3, 4]},
            },
            {
                "risk": {"kind": "quadratic", "eigen_range": [1.0, 3.0]},
                "regularizer": {"kind": "group_l1", "rho": 1.0, "indices": [5, 6, 7, 8, 9]},
            },
            {
                "count": 2,
                "risk": {"kind": "quadratic", "eigen_range": [1.0, 3.0]},
                "regularizer": {"kind": "l1", "rho": 1.0},
            },
        ],
        "algorithm": {"mu": 0.05, "delta": 0.1, "iterations": 0},
        "metrics": {"target": "nonsmooth"},
        "verification": {"deltas": [1e-1, 1e-2, 1e-3, 1e-4]},
    },
    "contraction-quadratic": {
        "name": "contraction-quadratic",
        "task": "contraction",
        "output": "results/contraction-quadratic",
        "network": {"n_agents": 4, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 5, "seed": 1},
        "agents": [
            {
                "count": 4,
                "risk": {"kind": "quadratic", "eigen_range": [1.0, 2.0]},
                "regularizer": {"kind": "l1", "rho": 0.5},
            }
        ],
        "algorithm": {"delta": 1.0, "iterations": 0},
        "verification": {"mu_factors": [0.5, 0.1], "contraction_steps": 500},
    },
    "contraction-unstable": {
        "name": "contraction-unstable",
        "task": "contraction",
        "output": "results/contraction-unstable",
        "network": {"n_agents": 4, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 5, "seed": 1},
        "agents": [
            {
                "count": 4,
                "risk": {"kind": "quadratic", "eigen_range": [1.0, 2.0]},
                "regularizer": {"kind": "l1", "rho": 0.5},
            }
        ],
        "algorithm": {"delta": 1.0, "iterations": 0},
        "verification": {"mu_values": [1.5], "contraction_steps": 500},
    },
    "msd-quadratic": {
        "name": "msd-quadratic",
        "task": "msd",
        "output": "results/msd-quadratic",
        "network": {"n_agents": 5, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 10, "seed": 2},
        "agents": [
            {
                "count": 5,
                "noise_sigma": 2.0,
                "risk": {"kind": "quadratic", "eigen_range": [4.0, 8.0], "noise": "synthetic"},
                "regularizer": {"kind": "l1", "rho": 0.1},
            }
        ],
        "algorithm": {
            "mu_sweep": [4e-3, 2e-3, 1e-3],
            "kappa": 0.3,
            "iterations": 4000,
            "scale_iterations": True,
            "repetitions": 30,
            "initial": "target",
        },
        "metrics": {"target": "smoothed", "window_fraction": 0.2, "write_runs": False},
        "verification": {"msd_slope_band": [0.8, 1.3]},
    },
    "division-of-labor": {
        "name": "division-of-labor",
        "task": "run",
        "output": "results/division-of-labor",
        "network": {
            "n_agents": 10,
            "topology": "small_world",
            "degree": 4,
            "rewire": 0.3,
            "rule": "metropolis",
        },
        # Few informative coordinates among many sparse ones; the short budget keeps the
        # final window inside the transient, where the sparse coordinates separate the variants
        "problem": {"dimension": 40, "informative": 4, "noise_profile": [1.0, 3.0]},
        "agents": [
            {
                "role": "fully_informed",
                "count": 3,
                "risk": {"kind": "logistic_l2", "rho2": 0.01},
                "regularizer": {"kind": "random_group_l1", "rho": 0.5, "count": 30},
            },
            {
                "role": "data_informed",
                "count": 5,
                "risk": {"kind": "logistic_l2", "rho2": 0.01},
            },
            {
                "role": "structure_informed",
                "count": 2,
                "regularizer": {"kind": "random_group_l1", "rho": 0.5, "count": 30},
            },
        ],
        "algorithm": {
            "variants": ["regularized_diffusion", "unregularized_diffusion", "non_cooperative"],
            "mu": 0.05,
            "delta": 0.05,
            "iterations": 20,
            "repetitions": 30,
        },
        "metrics": {"target": "nonsmooth", "test_size": 500},
    },
    "division-of-labor-full": {
        "name": "division-of-labor-full",
        "task": "run",
        "output": "results/division-of-labor-full",
        "network": {
            "n_agents": 40,
            "topology": "small_world",
            "degree": 4,
            "rewire": 0.3,
            "rule": "metropolis",
        },
        "problem": {"dimension": 100, "informative": 10, "noise_profile": [1.0, 3.0]},
        "agents": [
            {
                "role": "fully_informed",
                "count": 12,
                "risk": {"kind": "logistic_l2", "rho2": 0.01},
                "regularizer": {"kind": "random_group_l1", "rho": 0.5, "count": 80},
            },
            {
                "role": "data_informed",
                "count": 20,
                "risk": {"kind": "logistic_l2", "rho2": 0.01},
            },
            {
                "role": "structure_informed",
                "count": 8,
                "regularizer": {"kind": "random_group_l1", "rho": 0.5, "count": 80},
            },
        ],
        "algorithm": {
            "variants": ["regularized_diffusion", "unregularized_diffusion", "non_cooperative"],
            "mu": 0.05,
            "delta": 0.05,
            "iterations": 30,
            "repetitions": 30,
        },
        "metrics": {"target": "none", "test_size": 1000, "write_runs": False},
    },
}

# Names the experiments are also known by
PRESET_ALIASES: dict[str, str] = {
    "paper-fig3": "division-of-labor",
    "paper-fig3-full": "division-of-labor-full",
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def load_preset(name: str) -> dict[str, Any]:
    """
    Get a fresh copy of a preset's raw configuration, resolving aliases.

    Raises:
        ConfigParse: If no preset or alias has that name.
    """
    try:
        return copy.deepcopy(PRESETS[PRESET_ALIASES.get(name, name)])
    except KeyError:
        raise ConfigParse(
            f"Unknown preset {name!r}; available presets: {', '.join(preset_names())}"
        ) from None
