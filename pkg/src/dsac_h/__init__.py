"""Safe RL: distributional soft actor-critic with a harmonic policy gradient."""

__version__ = "0.1.0"

from .autodiff import NumericalError
from .harmonic import (
    HarmonicSolution,
    HpiProblem,
    detect_conflict,
    dual_oracle,
    nominal_gradient,
    solve_harmonic,
)
from .nets import MlpSpec, ParamVector, finite_diff_check, grad_scalar, init_params, mlp_forward
from .optim import AdamState, adam_step

__all__ = [
    "NumericalError",
    "HarmonicSolution",
    "HpiProblem",
    "detect_conflict",
    "dual_oracle",
    "nominal_gradient",
    "solve_harmonic",
    "MlpSpec",
    "ParamVector",
    "finite_diff_check",
    "grad_scalar",
    "init_params",
    "mlp_forward",
    "AdamState",
    "adam_step",
]
