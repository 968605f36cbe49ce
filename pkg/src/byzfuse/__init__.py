"""Byzantine-robust distributed detection.

Submodules: model (states, placements, reports), fusion (voting rules),
isolation (reputation-based node removal), optimal (window MAP fusion),
mp (message passing), game (payoff estimation and equilibria),
consensus (censored average consensus), scenarios, harness (configs, CLI).
"""

from . import consensus, fusion, game, isolation, model, mp, optimal, rng, scenarios
from ._validation import (ByzfuseError, CapacityError, ConfigError, DomainError, ParameterError,
                          UnsupportedInputError)

__version__ = "0.1.0"
