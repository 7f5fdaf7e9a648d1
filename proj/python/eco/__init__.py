"""Energy-constrained operators: learned emulators with provable boundedness."""

from ._eco import (
    Model,
    Trajectory,
    alpha_threshold,
    evaluate,
    lemma1_certificate,
    read_trajectory,
    simulate_ks,
    simulate_lorenz,
    train,
    write_trajectory,
)

__all__ = [
    "Model",
    "Trajectory",
    "alpha_threshold",
    "evaluate",
    "lemma1_certificate",
    "read_trajectory",
    "simulate_ks",
    "simulate_lorenz",
    "train",
    "write_trajectory",
]
