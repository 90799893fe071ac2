"""Spectral experiments for geometric quantization on degenerating torus fibrations."""
from .bundle import BSPointSet, PrequantumBundle, bs_points, fiber_holonomy
from .eigen import ClusterReport, SpectrumResult, cluster, lowest_eigenpairs
from .errors import GQLabError
from .lattice import (SparseHermitianOperator, assemble_bochner, assemble_circle_reduced,
                      assemble_dbar, assemble_fiber_operator, assemble_sharp)
from .limit import LimitSpectrum, gaussian_spectrum, lambda_k_b, level_index_N
from .model import (ComplexStructureFamily, Grid, MetricField, TorusModel, family_at,
                    metric_from_A, preset)

__version__ = "0.1.0"

__all__ = [
    "BSPointSet", "PrequantumBundle", "bs_points", "fiber_holonomy",
    "ClusterReport", "SpectrumResult", "cluster", "lowest_eigenpairs",
    "GQLabError",
    "SparseHermitianOperator", "assemble_bochner", "assemble_circle_reduced", "assemble_dbar",
    "assemble_fiber_operator", "assemble_sharp",
    "LimitSpectrum", "gaussian_spectrum", "lambda_k_b", "level_index_N",
    "ComplexStructureFamily", "Grid", "MetricField", "TorusModel", "family_at", "metric_from_A",
    "preset",
]
