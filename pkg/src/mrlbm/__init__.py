"""Adaptive multiresolution lattice-Boltzmann methods on dyadic cell trees."""

from .config import RunConfig, parse_config
from .fields import FieldSet
from .lbm import SchemeSpec, Streamer, collide, stream
from .mesh import CellId, CellTree, Grid, make_graded
from .multiresolution import PredictionConfig, TreeData, adapt, compress_array, encode
from .solver import AdaptiveSolver, ReferenceSolver

__all__ = ["AdaptiveSolver", "CellId", "CellTree", "FieldSet", "Grid", "PredictionConfig",
           "ReferenceSolver", "RunConfig", "SchemeSpec", "Streamer", "TreeData", "adapt",
           "collide", "compress_array", "encode", "make_graded", "parse_config", "stream"]
