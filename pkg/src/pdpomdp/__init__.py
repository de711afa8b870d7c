"""Certified reachability bounds for posterior-deterministic POMDPs."""

from .analysis import Analysis
from .errors import *  # noqa: F401,F403
from .model import (
    Pomdp,
    SubBelief,
    belief_update,
    check_posterior_deterministic,
    cut,
    normalize,
    obs_probability,
    redirect_belief,
    restrict,
    validate,
)
from .modelio import emit_model, parse_document, parse_model
from .sec import Sec, is_sec, maximal_sec_of, maximal_secs, sec_union
from .supports import explore, rank_table, support_step
from .unfold import ApproxParams, Unfolder, approximate, certified_depth, decide

__version__ = "0.1.0"
