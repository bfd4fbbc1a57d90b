"""Run plumbing: configs, checkpoints, plots, diagnostics and the CLI."""

from ..seeding import seed_streams
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cli import main, run_eval, run_gradcheck, run_plot, run_train
from .config import RunConfig, load_config, parse_config, to_text

__all__ = [
    "CheckpointError", "RunConfig", "load_checkpoint", "load_config", "main", "parse_config",
    "run_eval", "run_gradcheck", "run_plot", "run_train", "save_checkpoint", "seed_streams", "to_text",
]
