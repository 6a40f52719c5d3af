"""Python front end for the Gittins scheduling simulator."""

import json

from . import _core
from ._core import (
    ConfigError,
    Distribution,
    NonConvergence,
    RankFunction,
    RecyclingStorm,
    UnboundedResidual,
    gap_constant,
    heavy_traffic_limit,
)

__all__ = [
    "ConfigError",
    "Distribution",
    "NonConvergence",
    "RankFunction",
    "RecyclingStorm",
    "UnboundedResidual",
    "config_hash",
    "distribution",
    "gap_constant",
    "heavy_traffic_limit",
    "loss_terms",
    "simulate",
    "verify",
]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def distribution(spec):
    """Build a Distribution from a dict such as {"family": "exponential", "rate": 1}."""
    return Distribution.from_json(_text(spec))


def simulate(config):
    """Run one configuration (dict or JSON text) and return summary statistics."""
    return _core.simulate(_text(config))


def loss_terms(config):
    return _core.loss_terms(_text(config))


def config_hash(config):
    return _core.config_hash(_text(config))


def verify(experiment, workers=0, out_dir=""):
    """Run the checks listed in the experiment's "suite"; returns (check, passed, text) tuples."""
    return _core.verify(_text(experiment), workers, out_dir)
