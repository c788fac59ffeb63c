"""Systems under test and the name -> class registry."""
from .base import ConfigError, DynamicsError, Environment, gaussian_log_prob, load_default_params
from .collision import CollisionAvoidance
from .crosswalk import Crosswalk
from .pendulum import Pendulum
from .toy import ToyGaussian

ENVIRONMENTS = {cls.name: cls for cls in (ToyGaussian, Pendulum, Crosswalk, CollisionAvoidance)}


def make_env(name, params=None):
    """Build an environment by registry name with optional parameter overrides."""
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(
            f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(**(params or {}))


__all__ = ["ENVIRONMENTS", "make_env", "Environment", "ToyGaussian", "Pendulum", "Crosswalk",
           "CollisionAvoidance", "ConfigError", "DynamicsError", "gaussian_log_prob",
           "load_default_params"]
