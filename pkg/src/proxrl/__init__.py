"""Proximal and primal-dual reinforcement learning in numpy."""

from . import envs, geometry, gtd, mdp, png, splitting, td, vi
from .errors import NonConvergence, ProxRLError, StepSizeWarning
from .geometry import BregmanGeometry, FeasibleSet, ProxFriendlyFunction, prox_l1
from .gtd import RotdIterate, SaddleIterate
from .mdp import FeatureBasis, GtdLinearSystem, MarkovRewardProcess, TransitionSample
from .td import TdIterate
from .vi import ProjectedAffineEquation, VIProblem

__version__ = "0.1.0"
