"""Numeric tolerances and resource limits, configurable per run."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Tolerance knobs used throughout the geometry and model pipeline.

    eps_line  - hyperplane scale: gradient rows with norm at or below this
                are treated as constant units; coincidence of canonically
                scaled lines is tested against it.
    eps_geom  - incidence tolerance: node merging, clipping snap distance,
                point-in-polygon slack.
    eps_area  - faces with area at or below this are degenerate slivers;
                they are dropped and accounted.
    dense_limit - refuse to densify a lowered layer matrix with more
                entries than this; such layers stay sparse.
    """

    eps_line: float = 1e-14
    eps_geom: float = 1e-12
    eps_area: float = 1e-16
    dense_limit: int = 2 ** 24


DEFAULT_TOL = Tolerances()

# Total dropped sliver area above this fraction of the ROI area fails the run.
MAX_DROPPED_AREA_FRACTION = 1e-6

# Forward self-check: structured evaluation vs lowered matrices.
FORWARD_CHECK_TOL = 1e-10
