"""Bandwidth allocation with an iterative oracle and a meta-learned GNN."""

import json

from ._bandalloc import *  # noqa: F401,F403
from ._bandalloc import default_config, run_command


def run(name, **overrides):
    """Runs a CLI subcommand with the default config updated by ``overrides``.

    Nested sections (``task``, ``train``, ``meta``, ...) are merged key by key.
    """
    cfg = json.loads(default_config())
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return run_command(name, json.dumps(cfg))
