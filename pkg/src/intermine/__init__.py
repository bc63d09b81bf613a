"""Extraction of multi-agent driving interaction events from trajectory data."""

from .conflict import ChainComponent, ConflictPair, ConflictParams, FuturePath, PathMode
from .events import InteractionEvent, PipelineParams, StepRecord, extract_events
from .msaa import MsaaParams, MsaaSolution, solve_chain, solve_pair
from .traj_model import AgentState, AgentTrack, AgentType, Scene

__all__ = [
    "AgentState", "AgentTrack", "AgentType", "ChainComponent", "ConflictPair",
    "ConflictParams", "FuturePath", "InteractionEvent", "MsaaParams", "MsaaSolution",
    "PathMode", "PipelineParams", "Scene", "StepRecord", "extract_events",
    "solve_chain", "solve_pair",
]

__version__ = "0.1.0"
