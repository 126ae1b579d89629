"""Interval maps, cylinder partitions and orbit sampling."""

from .core import Branch, Coding, CriticalPoint, IntervalMap, from_smooth
from .gallery import (
    GALLERY,
    AnalyticDensity,
    build_map,
    describe_gallery,
    doubling,
    logistic,
    parse_map_spec,
    skewlinear,
    tent,
)
from .partition import (
    Cylinder,
    CylinderPartition,
    branch_partition,
    cylinder_from_orbit,
    cylinder_from_symbols,
    cylinder_of,
    itinerary,
    partition,
    refine,
    trivial_partition,
    write_partitions_csv,
)
from .sampler import OrbitSampler, lyapunov

__all__ = [
    "AnalyticDensity", "Branch", "Coding", "CriticalPoint", "Cylinder", "CylinderPartition",
    "GALLERY", "IntervalMap", "OrbitSampler", "branch_partition", "build_map",
    "cylinder_from_orbit", "cylinder_from_symbols", "cylinder_of", "describe_gallery",
    "doubling", "from_smooth", "itinerary", "logistic", "lyapunov", "parse_map_spec",
    "partition", "refine", "skewlinear", "tent", "trivial_partition", "write_partitions_csv",
]
