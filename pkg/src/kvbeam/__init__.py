"""Timoshenko beam with one locally degenerate Kelvin-Voigt damping.

Finite-element discretization, energy-norm time integration with decay fits,
and imaginary-axis resolvent analysis of the damped generator.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

from .discretization import (
    DiscreteState,
    GeneratorSystem,
    Mesh,
    assemble_generator,
    build_mesh,
    graph_norm,
    h_norm,
    interpolate,
)
from .exceptions import KVBeamError
from .frequency_domain import (
    ResolventSweep,
    SpectrumReport,
    boundedness_certificate,
    fit_resolvent_exponent,
    resolvent_norm,
    resolvent_sweep,
    spectrum,
)
from .model import (
    BeamParameters,
    ContinuousState,
    DampingConfiguration,
    DampingProfile,
    Side,
    degeneracy_exponent,
    dissipation_rate,
    energy,
    evaluate_damping,
    hardy_bound_check,
)
from .time_domain import (
    DecayFit,
    Trajectory,
    default_window,
    dissipation_identity_residual,
    fit_decay_exponent,
    simulate,
    step,
)

__all__ = [
    "BeamParameters",
    "ContinuousState",
    "DampingConfiguration",
    "DampingProfile",
    "DecayFit",
    "DiscreteState",
    "GeneratorSystem",
    "KVBeamError",
    "Mesh",
    "ResolventSweep",
    "Side",
    "SpectrumReport",
    "Trajectory",
    "assemble_generator",
    "boundedness_certificate",
    "build_mesh",
    "default_window",
    "degeneracy_exponent",
    "dissipation_identity_residual",
    "dissipation_rate",
    "energy",
    "evaluate_damping",
    "fit_decay_exponent",
    "fit_resolvent_exponent",
    "graph_norm",
    "h_norm",
    "hardy_bound_check",
    "interpolate",
    "resolvent_norm",
    "resolvent_sweep",
    "simulate",
    "spectrum",
    "step",
]
