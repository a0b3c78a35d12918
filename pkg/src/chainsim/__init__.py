"""Deterministic blockchain consensus simulator and metrics."""

from .chain import Block, BlockDag, Transaction
from .config import ScenarioConfig, from_dict, load
from .simnet import Simulator, Trace, run

__all__ = ["Block", "BlockDag", "Transaction", "ScenarioConfig", "from_dict", "load",
           "Simulator", "Trace", "run"]
__version__ = "0.1.0"
