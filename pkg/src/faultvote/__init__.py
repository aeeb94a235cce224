"""Fault identification from admittance changes.

GP response surfaces per excitation frequency, an epsilon-dominance
many-objective simulated annealer, and voting-score ensembles over
repeated annealing runs.
"""

from ._accel import backend
from .emosar import AnnealSchedule, Archive, MoveParams, ObjectiveSet
from .gp import GpSurface, KernelParams, MCMCConfig, SurfaceStack, TrainingSet
from .structure import FaultScenario, FrequencySweep, StructuralModel, default_model
from .voting import VotingTally

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule", "Archive", "FaultScenario", "FrequencySweep", "GpSurface",
    "KernelParams", "MCMCConfig", "MoveParams", "ObjectiveSet", "StructuralModel",
    "SurfaceStack", "TrainingSet", "VotingTally", "backend", "default_model",
]
