"""Frame-level video affect toolkit: heads, smoothing, thresholds, metrics."""

import json as _json

from ._core import (
    ConfigError,
    DataError,
    adapt_pretrained_logits,
    apply_thresholds,
    blend,
    ccc,
    load_features,
    macro_f1,
    mean_ccc,
    multilabel_f1,
    predict,
    search_thresholds,
    smooth,
    synth,
)
from . import _core

__all__ = [
    "ConfigError", "DataError", "adapt_pretrained_logits", "apply_thresholds", "blend", "ccc",
    "evaluate", "load_features", "macro_f1", "mean_ccc", "multilabel_f1", "predict", "predict_file",
    "search_thresholds", "smooth", "sweep", "synth", "train",
]


def train(config):
    """Train the head described by a config dict; returns the model path."""
    return _core.train(_json.dumps(config))


def evaluate(config, models, sweep_k=()):
    """Run the evaluation pipeline; returns the report as a dict."""
    return _json.loads(_core.evaluate(_json.dumps(config), list(models), list(sweep_k)))


def predict_file(config, models):
    return _core.predict_file(_json.dumps(config), list(models))


def sweep(config, models, param, values):
    return _core.sweep(_json.dumps(config), list(models), param, [float(v) for v in values])
