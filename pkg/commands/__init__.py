"""Command implementations behind run_pulaski.py."""
from .gen import cmd_gen
from .train import cmd_train
from .sample import cmd_sample
from .evaluate import cmd_eval
from .manifest import RunManifest, content_hash

COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
}

__all__ = ["cmd_gen", "cmd_train", "cmd_sample", "cmd_eval", "RunManifest", "content_hash", "COMMANDS"]
