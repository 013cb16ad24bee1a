"""Trigger-enhanced recursive graph networks for nested named entity recognition."""

from .config import RunConfig, load_config
from .encoder import TriggerEncoder
from .model import TriggerGNNTagger

__version__ = "0.1.0"

__all__ = ["RunConfig", "TriggerEncoder", "TriggerGNNTagger", "load_config"]
