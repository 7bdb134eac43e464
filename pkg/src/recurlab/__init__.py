"""Twisted recurrence for expanding matrix maps on the torus: exact orbits,
partitions, shrinking targets and hit-count experiments."""

from .errors import *  # noqa: F401,F403
from .torus_maps import (MatrixTorusMap, TorusPoint, apply, orbit, required_precision,
                         validate_expanding)
from .targets import (DeltaSchedule, HyperboloidTarget, RadiusSchedule, RectTarget,
                      build_schedule, hyperboloid_volume, volume_partial_sums)
from .twists import TwistFunction

__version__ = "0.1.0"
