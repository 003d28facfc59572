"""Simulated-annealing approximate Bayesian computation."""

from .core import Ensemble, Particle, PriorSample, ess, resample, rng_stream
from .driver import RunConfig, RunResult, initialize, run, run_explicit, run_flat, run_informative
from .models import MODELS, ModelSpec, tb_model, toy1_model, toy2_model

__all__ = [
    "Ensemble", "Particle", "PriorSample", "ess", "resample", "rng_stream",
    "RunConfig", "RunResult", "initialize", "run", "run_explicit", "run_flat", "run_informative",
    "MODELS", "ModelSpec", "tb_model", "toy1_model", "toy2_model",
]

__version__ = "0.1.0"
