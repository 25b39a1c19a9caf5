"""Diffuse-jet diagnostics for grid-sampled maps.

Thin wrapper around the C++ core; see the project README for the CLI and the
file formats.
"""

from ._djet import (  # noqa: F401
    __version__,
    chordal_distance,
    check_dsolution,
    estimate_diffuse_jet,
    evaluate_mollified,
    input_field,
    input_names,
    mollify,
    run_approximation,
    system_names,
)
