"""pathhjb: desk-scale numerics for path-dependent stochastic optimal control.

Submodules
----------
pathspace     grid paths, sup norm, d-infinity metric, path surgeries
funcalc       horizontal/vertical derivatives, chain-rule verifier
gauge         smooth gauge functional family with closed-form derivatives
varprinciple  constructive perturbed maximization over candidate sets
control       Euler simulation, exact noise tree, BSDE, value, DPP residual
phjb          Hamiltonian, residual checks, viscosity probes, FD oracle
bshjb         noise-path augmentation and the mixed-equation residual
cli           batch experiment runner
"""

from . import bshjb, control, funcalc, gauge, pathspace, phjb, sampling, varprinciple

__version__ = "0.1.0"

__all__ = [
    "pathspace",
    "funcalc",
    "gauge",
    "varprinciple",
    "control",
    "phjb",
    "bshjb",
    "sampling",
]
