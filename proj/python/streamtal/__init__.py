"""Streaming weakly supervised temporal action localization."""

import json

from ._core import (
    ConfigError,
    Error,
    FormatError,
    IoError,
    Model,
    ModelOutput,
    NumericError,
    ValidationError,
    default_config as _default_config,
    evaluate_map,
    generate as _generate,
    label_segments as _label_segments,
    nms,
    run_experiment as _run_experiment,
    segment_entropy,
    tiou,
)

__all__ = [
    "ConfigError", "Error", "FormatError", "IoError", "Model", "ModelOutput", "NumericError",
    "ValidationError", "default_config", "evaluate_map", "generate", "label_segments", "nms",
    "run_experiment", "segment_entropy", "tiou",
]


def _dump(config):
    if config is None:
        return "{}"
    return config if isinstance(config, str) else json.dumps(config)


def default_config():
    """Default experiment config as a dict."""
    return json.loads(_default_config())


def generate(config=None, split=0):
    """Synthetic stream for `split` (0 = training order, otherwise sequential)."""
    return _generate(_dump(config), split)


def label_segments(config=None):
    """Uniform division, sampling and oracle labels without training."""
    return _label_segments(_dump(config))


def run_experiment(config=None, out_dir=None):
    """Full run; writes the run directory when `out_dir` is given."""
    return _run_experiment(_dump(config), out_dir)
