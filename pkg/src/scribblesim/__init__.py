"""Simulate scribble annotations from instance masks.

Also ships exact distance-perception maps and reference implementations of
the training losses that consume them.
"""

from .distmaps import DistanceMap, MapKind, pseudo_boundary_distance_map, scribble_distance_map
from .errors import ScribbleSimError
from .rng import SplitMix64, image_seed
from .synth import InstanceAnnotation, ScribbleStyle, SimulationConfig, simulate_image, simulate_instance

__version__ = "0.1.0"

__all__ = [
    "DistanceMap", "MapKind", "pseudo_boundary_distance_map", "scribble_distance_map",
    "ScribbleSimError", "SplitMix64", "image_seed",
    "InstanceAnnotation", "ScribbleStyle", "SimulationConfig", "simulate_image", "simulate_instance",
]
