"""
PDMP Lab Package
Simulation and numerical diagnostics for piecewise-deterministic Markov processes
"""

__version__ = '1.0.0'
__author__ = 'PDMP Lab Team'

from .model import EmpiricalMeasure, ModelError, PdmpModel, State, builtin_model, flow, validate_model
from .rng import RngStream
from .simulate import SimulationError, sample_invariant, simulate_chain, step_chain
from .operators import PathSpec, check_correspondence, compose_Wn, pushforward
from .metrics import FmResult, MetricConfig, MetricError, RateFit, fit_rate, fm_distance, fm_distance_report, rho_c
from .diagnostics import DiagnosticsError, DiagnosticsReport, RankProbe, check_rank, classify_continuity
from .processor import ResultsProcessor, RunArtifacts
from .s3_uploader import ArtifactS3Uploader

__all__ = [
    'EmpiricalMeasure',
    'ModelError',
    'PdmpModel',
    'State',
    'builtin_model',
    'flow',
    'validate_model',
    'RngStream',
    'SimulationError',
    'sample_invariant',
    'simulate_chain',
    'step_chain',
    'PathSpec',
    'check_correspondence',
    'compose_Wn',
    'pushforward',
    'MetricConfig',
    'MetricError',
    'RateFit',
    'fit_rate',
    'FmResult',
    'fm_distance',
    'fm_distance_report',
    'rho_c',
    'DiagnosticsError',
    'DiagnosticsReport',
    'RankProbe',
    'check_rank',
    'classify_continuity',
    'ResultsProcessor',
    'RunArtifacts',
    'ArtifactS3Uploader'
]
