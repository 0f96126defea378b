"""Test-time selection between two classifiers using confidence and windowed meta-d'."""

from .bandit import ArmState, BanditConfig, ContextVector, LinTS, LinUCB
from .engine import EngineConfig, MetacognitiveSelector, RunReport, TrialEvent, report, run
from .metad import MetaDEstimator, MetaDFit, PerformanceWindow, fit_meta_d
from .sdt import Type2Model
from .traces import AlignedTrace, ScenarioSpec, Segment, TrialRecord, generate, parse_trace

__all__ = [
    "AlignedTrace",
    "ArmState",
    "BanditConfig",
    "ContextVector",
    "EngineConfig",
    "LinTS",
    "LinUCB",
    "MetaDEstimator",
    "MetaDFit",
    "MetacognitiveSelector",
    "PerformanceWindow",
    "RunReport",
    "ScenarioSpec",
    "Segment",
    "TrialEvent",
    "TrialRecord",
    "Type2Model",
    "fit_meta_d",
    "generate",
    "parse_trace",
    "report",
    "run",
]

__version__ = "0.1.0"
