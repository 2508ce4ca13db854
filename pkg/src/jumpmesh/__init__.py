"""LGR direct collocation with hp mesh refinement and jump-function discontinuity detection."""
from .driver import RunConfig, RunHistory, run
from .jumpfun import JumpConfig
from .mesh import Mesh
from .problems import PROBLEMS, get_problem

__all__ = ["JumpConfig", "Mesh", "PROBLEMS", "RunConfig", "RunHistory", "get_problem", "run"]
__version__ = "0.1.0"
