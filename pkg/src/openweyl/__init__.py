"""Fractal Weyl analysis of an open rotating Henon-Heiles system.

Library layout mirrors the pipeline: `model` (Hamiltonian and section
geometry), `integrator` (fixed-step RK8), `repeller` (survival ensembles),
`dimension` (correlation dimension), `quantum` (complex-rotation spectra),
`weyl` (resonance box counting), `husimi` (averaged quantum sections),
`pipeline`/`cli` (orchestration and artifacts).
"""

from .dimension import CorrelationCurve, correlation_sum, fit_dimension, loglog_fit
from .husimi import HusimiConfig, HusimiGrid, averaged_husimi, coherent_overlap, repeller_overlap_score
from .integrator import IntegratorConfig, integrate
from .model import ModelParams, PhaseState, SosDomain, SosPoint, energy, eom, sos_momentum
from .pipeline import RunConfig, run_pipeline
from .quantum import (
    BasisSpec,
    Resonance,
    RotatedHamiltonian,
    SpectrumCatalog,
    assemble,
    eigensolve_dense,
    eigensolve_iterative,
    theta_filter,
)
from .repeller import RepellerSet, SurvivalConfig, build_repeller, sample_sos_initial_conditions, survivors
from .weyl import CountingBoxes, WeylFit, count_box, fit_weyl

__version__ = "1.0.0"
