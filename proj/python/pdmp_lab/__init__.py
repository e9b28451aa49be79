"""Simulation, metrics and diagnostics for piecewise-deterministic Markov processes."""

from ._core import (
    Measure,
    Model,
    PdmpError,
    __version__,
    check_correspondence,
    check_hypotheses,
    check_positivity,
    check_rank,
    classify_continuity,
    compose_Wn,
    fit_rate,
    fm_distance,
    model_names,
    model_params,
    pushforward,
    run_cli,
    sample_invariant,
    simulate,
    suggest_anchors,
    weight_T_n,
)

__all__ = [
    "Measure",
    "Model",
    "PdmpError",
    "__version__",
    "check_correspondence",
    "check_hypotheses",
    "check_positivity",
    "check_rank",
    "classify_continuity",
    "compose_Wn",
    "fit_rate",
    "fm_distance",
    "model_names",
    "model_params",
    "pushforward",
    "run_cli",
    "sample_invariant",
    "simulate",
    "suggest_anchors",
    "weight_T_n",
]
