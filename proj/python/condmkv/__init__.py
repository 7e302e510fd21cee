"""Python access to the conditional McKean-Vlasov experiments."""

from ._core import (
    ConfigError,
    PreconditionError,
    SolverError,
    counterexample_amplitude,
    experiments,
    run_config,
    run_text,
    sampling_tv,
    w1,
)

__all__ = [
    "ConfigError",
    "PreconditionError",
    "SolverError",
    "counterexample_amplitude",
    "experiments",
    "run_config",
    "run_text",
    "sampling_tv",
    "w1",
]
