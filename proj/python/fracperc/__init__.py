"""Fractal percolation simulation, pattern detection and experiment harness."""

import json as _json
import os as _os

from ._core import (
    BudgetError,
    ConfigError,
    Tree,
    commands,
    detect,
    detect_cubes,
    dimension_value,
    extinction_probability,
    intersection_mass,
    offspring_distribution,
    sample_tree,
    threshold,
)

__all__ = [
    "BudgetError",
    "ConfigError",
    "Tree",
    "aggregate",
    "commands",
    "detect",
    "detect_cubes",
    "dimension_value",
    "extinction_probability",
    "intersection_mass",
    "offspring_distribution",
    "preset",
    "run",
    "sample_tree",
    "threshold",
]


def preset(command, name="smoke"):
    """Preset configuration for a command as a dict of strings."""
    from ._core import _preset

    return dict(_preset(command, name))


def run(command, config=None, out="out", seed=1, threads=1):
    """Run one experiment and return its summary (also written to out/summary.json)."""
    from ._core import _run

    values = {k: _format(v) for k, v in (config or {}).items()}
    return _json.loads(_run(command, values, _os.fspath(out), seed, threads))


def aggregate(inputs, out="out"):
    """Pool frequency CSVs by (family, params, p, n)."""
    from ._core import _aggregate

    return _json.loads(_aggregate([_os.fspath(p) for p in inputs], _os.fspath(out)))


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)
