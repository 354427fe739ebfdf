"""Python front end to the pogp C++ library.

Configs are plain dicts with the same keys as the CLI's JSON files.
"""

import json

import numpy as np

from ._pogp import PogpError
from . import _pogp

__all__ = ["PogpError", "simulate", "pseudo_outcomes", "fit", "FittedModel", "experiment", "bound_study", "power_curve"]

Z95 = 1.959964


def simulate(sim=None):
    """Draw one dataset. Returns dicts of numpy arrays for obs, exp and both truth grids."""
    return _pogp.simulate(json.dumps(sim or {}))


def pseudo_outcomes(t, y, propensity):
    return _pogp.pseudo_outcomes(np.asarray(t, dtype=np.int32).tolist(), np.asarray(y, dtype=float), propensity)


class FittedModel:
    def __init__(self, payload):
        self._json = payload
        self.info = json.loads(payload)

    @property
    def hyperparameters(self):
        return dict(self.info["hyperparameters"])

    def predict(self, x, obs_gap=None, z=Z95):
        """CATE mean, std and credible bounds; obs_gap adds the observational gap at each row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gap = None if obs_gap is None else np.asarray(obs_gap, dtype=float)
        return _pogp.predict_model(self._json, x, gap, z)

    def to_json(self):
        return self._json


def fit(x, t, y, propensity=0.5, model="ours", obs_gap=None, optimizer=None):
    """Fit on experimental rows. obs_gap holds the observational gap at each row (zero if omitted)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    gap = None if obs_gap is None else np.asarray(obs_gap, dtype=float)
    payload = _pogp.fit_model(x, np.asarray(t, dtype=np.int32).tolist(), np.asarray(y, dtype=float), propensity,
                              model, gap, json.dumps(optimizer or {}))
    return FittedModel(payload)


def experiment(config):
    return json.loads(_pogp.experiment(json.dumps(config)))


def bound_study(config):
    return json.loads(_pogp.bound_study(json.dumps(config)))


def power_curve(band=1.2, n_list=(50, 100, 200, 400), trials=2000, seed=0, alpha=0.05, outcome_bound=3.0):
    return json.loads(_pogp.power_curve(band, list(n_list), trials, seed, alpha, outcome_bound))
