"""Genetic Fuzzy-LQR control synthesis for a planar two-link space manipulator."""

from gftlqr.dyn2r import CoriolisVariant, ManipulatorParams, State4
from gftlqr.riccati import GainMatrix, LqrWeights, NoStabilizingSolution
from gftlqr.gft import FisSpec, GftController, MembershipPartition
from gftlqr.evo import GaConfig
from gftlqr.harness import (
    MissingBaseline,
    ScenarioCase,
    SimConfig,
    SimResult,
    StaticLqrController,
)

__version__ = "0.1.0"

__all__ = [
    "CoriolisVariant",
    "FisSpec",
    "GaConfig",
    "GainMatrix",
    "GftController",
    "LqrWeights",
    "ManipulatorParams",
    "MembershipPartition",
    "MissingBaseline",
    "NoStabilizingSolution",
    "ScenarioCase",
    "SimConfig",
    "SimResult",
    "State4",
    "StaticLqrController",
]
