"""Power, sample size and mixed-model fitting for cluster randomized trials
with co-primary endpoints.

Scenario-driven functions take the same dictionaries as the command-line
tool's scenario files and return plain dictionaries.
"""

import json

import numpy as np

from ._core import (
    CocrtError,
    components_to_icc,
    generate,
    icc_to_components,
    mvt_rectangle,
    noncentral_f_cdf,
    omega,
)
from . import _core

__all__ = [
    "CocrtError",
    "components_to_icc",
    "fit",
    "fit_csv",
    "generate",
    "icc_to_components",
    "load_scenario",
    "mvt_rectangle",
    "noncentral_f_cdf",
    "omega",
    "power",
    "resolve",
    "sample_size",
    "simulate",
]


def _text(scenario):
    return scenario if isinstance(scenario, str) else json.dumps(scenario)


def load_scenario(path):
    with open(path) as f:
        return json.load(f)


def resolve(scenario):
    """Scenario with defaults filled in and both model forms."""
    return json.loads(_core.resolve_json(_text(scenario)))


def power(scenario):
    return json.loads(_core.power_json(_text(scenario)))


def sample_size(scenario, solve="n"):
    """Smallest n (solve="n") or mean cluster size (solve="m") reaching the target power."""
    return json.loads(_core.sample_size_json(_text(scenario), solve))


def simulate(scenario, null=False, outcomes=False):
    return json.loads(_core.simulate_json(_text(scenario), null, outcomes))


def fit(cluster_id, arm, y, tol=1e-8, max_iter=5000):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return json.loads(
        _core.fit_json(list(map(int, cluster_id)), list(map(int, arm)), y, tol, max_iter)
    )


def fit_csv(path, tol=1e-8, max_iter=5000):
    return json.loads(_core.fit_csv_json(str(path), tol, max_iter))
