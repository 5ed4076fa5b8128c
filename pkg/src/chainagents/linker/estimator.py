"""Estimator front-end for the address-linking pipeline."""
from __future__ import annotations

from sklearn.base import BaseEstimator

from ..model import Chain
from .assemble import assemble_agents
from .heuristics import link_change, link_consolidation, link_same_input
from .trajectories import detect_patoshi, detect_trajectories

PIPELINES = ("full", "same-input")


class AddressLinker(BaseEstimator):
    """Cluster the addresses of a chain into agents.

    Parameters
    ----------
    tolerance : float
        Largest extranonce deviation from a trajectory's prediction.
    slope_min, slope_max : float
        Admissible extranonce-per-height slope of a trajectory.
    gap_limit : int
        Heights of silence after which a trajectory is closed.
    min_trajectory_len : int
        Members needed for a trajectory to be kept.
    patoshi_slope_min, patoshi_len_min :
        Steep trajectories (slope at or above the threshold, at least this
        long) are held out and credited to one reserved agent.
    overlap_tol : int
        Shared heights tolerated between two trajectories of one agent.
    share_min : int
        Blocks each side must hold on a common trajectory to be merged.
    round_counts : tuple of int
        Block counts that mark a round-batch consolidator.
    use_change : bool
        Also link fresh change outputs to their inputs.
    multi_machine : bool
        Only same-slope trajectories count as overlapping.
    pipeline : {"full", "same-input"}
        ``"same-input"`` is the baseline: components of input co-spending only.

    Attributes
    ----------
    trajectories_ : list of Trajectory
    patoshi_heights_ : set of int
    edges_ : list of LinkEdge
    catalog_ : AgentCatalog
    labels_ : dict mapping address to agent id
    n_agents_ : int
    """

    def __init__(self, tolerance=8, slope_min=0.8, slope_max=16.0, gap_limit=144,
                 min_trajectory_len=3, patoshi_slope_min=1.5, patoshi_len_min=20,
                 overlap_tol=2, share_min=3, round_counts=(20, 40), use_change=False,
                 multi_machine=False, pipeline="full"):
        self.tolerance = tolerance
        self.slope_min = slope_min
        self.slope_max = slope_max
        self.gap_limit = gap_limit
        self.min_trajectory_len = min_trajectory_len
        self.patoshi_slope_min = patoshi_slope_min
        self.patoshi_len_min = patoshi_len_min
        self.overlap_tol = overlap_tol
        self.share_min = share_min
        self.round_counts = round_counts
        self.use_change = use_change
        self.multi_machine = multi_machine
        self.pipeline = pipeline

    def _check_params(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if not 0 < self.slope_min <= self.slope_max:
            raise ValueError("need 0 < slope_min <= slope_max")
        if self.tolerance < 0 or self.gap_limit < 1 or self.min_trajectory_len < 2:
            raise ValueError("tolerance >= 0, gap_limit >= 1 and min_trajectory_len >= 2 required")
        if self.share_min < 1 or self.overlap_tol < 0:
            raise ValueError("share_min >= 1 and overlap_tol >= 0 required")
        if any(int(c) <= 0 for c in self.round_counts):
            raise ValueError("round_counts must be positive")

    def fit(self, chain: Chain, y=None):
        if not isinstance(chain, Chain):
            raise TypeError(f"expected a Chain, got {type(chain).__name__}")
        self._check_params()
        if self.pipeline == "same-input":
            self.trajectories_ = []
            self.patoshi_heights_ = set()
            self.edges_ = link_same_input(chain, complete=False)
            self.catalog_ = assemble_agents(chain, self.edges_, [], steps="d")
        else:
            self.trajectories_ = detect_trajectories(
                chain, self.tolerance, self.slope_min, self.slope_max,
                self.gap_limit, self.min_trajectory_len)
            self.patoshi_heights_ = detect_patoshi(
                self.trajectories_, self.patoshi_slope_min, self.patoshi_len_min)
            edges = link_same_input(chain, complete=False)
            if self.use_change:
                edges += link_change(chain)
            edges += link_consolidation(chain, self.trajectories_,
                                        exclude_heights=self.patoshi_heights_)
            self.edges_ = edges
            self.catalog_ = assemble_agents(
                chain, edges, self.trajectories_, self.patoshi_heights_,
                overlap_tol=self.overlap_tol, share_min=self.share_min,
                round_counts=tuple(int(c) for c in self.round_counts),
                multi_machine=self.multi_machine)
        self.labels_ = self.catalog_.labels
        self.n_agents_ = len(self.catalog_)
        return self

    def predict(self, addresses):
        """Agent id of each address; unknown addresses raise ``KeyError``."""
        return [self.labels_[a] for a in addresses]

    def fit_predict(self, chain: Chain, y=None):
        self.fit(chain)
        return [self.labels_[a] for a in chain.addresses]
