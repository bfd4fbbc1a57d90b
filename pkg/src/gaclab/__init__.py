"""Generative actor-critic with push-forward policies and an MMD entropy regularizer."""

from .gac import GacConfig, Trainer, train
from .seeding import seed_streams

__version__ = "0.1.0"

__all__ = ["GacConfig", "Trainer", "seed_streams", "train"]
