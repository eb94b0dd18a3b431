"""Baxter permutations, plane bipolar orientations, tandem walks and coalescent-walk processes."""
from . import bipolar, checks, coal, continuum, perm, permuton, walk
from .errors import BaxlabError, SamplerBudgetExceeded
from .perm import Permutation, is_baxter
from .rng import make_rng

__all__ = [
    "BaxlabError",
    "Permutation",
    "SamplerBudgetExceeded",
    "bipolar",
    "checks",
    "coal",
    "continuum",
    "is_baxter",
    "make_rng",
    "perm",
    "permuton",
    "walk",
]
__version__ = "0.1.0"
