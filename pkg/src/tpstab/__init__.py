"""Stationary states, linear stability and time-domain dynamics of a two-photon ring laser."""

__version__ = "0.1.0"

from .model import (ParameterError, PhysicalParams, ScaledParams, derived_cavity, from_physical,
                    load_params, mode_pulling)
from .steadystate import (Branch, SteadyStateSolution, atomic_steady, output_intensities, profile,
                          select_branch, threshold_gain)
from .stability import CharParams, EigenvalueSet, char_fn, find_roots, spectrum, stability_map

__all__ = [
    "ParameterError", "PhysicalParams", "ScaledParams", "derived_cavity", "from_physical",
    "load_params", "mode_pulling", "Branch", "SteadyStateSolution", "atomic_steady",
    "output_intensities", "profile", "select_branch", "threshold_gain", "CharParams",
    "EigenvalueSet", "char_fn", "find_roots", "spectrum", "stability_map",
]
