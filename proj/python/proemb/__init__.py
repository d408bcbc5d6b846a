"""Contagion-effect estimation under latent homophily.

Thin Python surface over the C++ core: configs are {key: value} string
dicts (same schema as config files and CLI flags), panels carry numpy
views of the generated world, and harness results come back as RMSE-table
JSON.
"""

from ._proemb import (
    RunPanel,
    config_digest,
    default_config,
    embed_panel,
    estimate_method,
    fit_tsls,
    make_run_panel,
    run_experiment,
    solve_least_squares,
    sweep_embedding_dim,
)

__all__ = [
    "RunPanel",
    "config_digest",
    "default_config",
    "embed_panel",
    "estimate_method",
    "fit_tsls",
    "make_run_panel",
    "run_experiment",
    "solve_least_squares",
    "sweep_embedding_dim",
]
