"""Python front end to the kinsobol C++ core."""

from ._kinsobol import (
    Model,
    ModelError,
    NumericalError,
    deterministic_qoi,
    deterministic_sobol,
    estimate_indices,
    load_model,
    parse_model,
    run_command,
    saltelli_design,
    simulate,
    solve_rre,
    stochastic_qoi,
    stochastic_sobol,
)

__all__ = [
    "Model",
    "ModelError",
    "NumericalError",
    "deterministic_qoi",
    "deterministic_sobol",
    "estimate_indices",
    "load_model",
    "parse_model",
    "run_command",
    "saltelli_design",
    "simulate",
    "solve_rre",
    "stochastic_qoi",
    "stochastic_sobol",
]
