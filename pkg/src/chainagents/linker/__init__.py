from .assemble import AgentCatalog, AgentSummary, assemble_agents, has_overlap
from .estimator import AddressLinker
from .heuristics import (
    CHANGE, CONSOLIDATION, SAME_INPUT, LinkEdge, link_change, link_consolidation, link_same_input,
)
from .nonce import classify_nonces, nonce_profile_compatible
from .trajectories import Trajectory, detect_patoshi, detect_trajectories
from .unionfind import UnionFind
from .validation import ValidationReport, validate

__all__ = [
    "AddressLinker", "AgentCatalog", "AgentSummary", "assemble_agents", "has_overlap",
    "LinkEdge", "SAME_INPUT", "CHANGE", "CONSOLIDATION", "link_same_input", "link_change",
    "link_consolidation", "classify_nonces", "nonce_profile_compatible", "Trajectory",
    "detect_trajectories", "detect_patoshi", "UnionFind", "ValidationReport", "validate",
]
