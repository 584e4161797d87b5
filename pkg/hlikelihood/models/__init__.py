# This package holds the joint models known to the toolkit.
#
# Every model is registered under the `name` it reports, which is also the
# value accepted by the command line's --model option.

from hlikelihood.exceptions import ConfigError
from hlikelihood.models.base import JointModel, ReparameterizedModel
from hlikelihood.models.bayarri import bayarri_marginal
from hlikelihood.models.exponential import exponential_future
from hlikelihood.models.normal import normal_location_future

MODELS = {
    "exp-future": lambda: exponential_future("natural_u", "lambda"),
    "exp-future-log": lambda: exponential_future("log_u", "lambda"),
    "exp-future-log-eta": lambda: exponential_future("log_u", "log_lambda"),
    "exp-future-eta": lambda: exponential_future("natural_u", "log_lambda"),
    "bayarri": lambda: bayarri_marginal(v_scale="natural"),
    "bayarri-log": lambda: bayarri_marginal(v_scale="log"),
    "normal-future": lambda: normal_location_future(1.0),
}


def get_model(name: str) -> JointModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(sorted(MODELS))}") from None
    return factory()


__all__ = [
    "MODELS",
    "JointModel",
    "ReparameterizedModel",
    "bayarri_marginal",
    "exponential_future",
    "get_model",
    "normal_location_future",
]
