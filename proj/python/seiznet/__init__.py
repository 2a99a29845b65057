"""Python access to the seiznet core (signal synthesis, focal loss, voting,
metrics, network simulation and the staged pipeline)."""

import json as _json

from ._seiznet import (
    AlignmentError,
    ConfigError,
    DecodeError,
    DependencyError,
    SeizNetError,
    UndefinedMetricError,
    auc,
    channel_vote,
    focal_loss,
    focal_loss_grad,
    fpr_per_hour,
    fuse,
    generate_recording,
    run_stage,
    sensitivity,
    specificity,
    time_vote,
)
from ._seiznet import simulate as _simulate


def simulate(scenario=None):
    """Run one network scenario (dict or JSON text). Returns (report dict, trace text)."""
    if scenario is None:
        text = "{}"
    elif isinstance(scenario, str):
        text = scenario
    else:
        text = _json.dumps(scenario)
    report, trace = _simulate(text)
    return _json.loads(report), trace


__all__ = [
    "AlignmentError",
    "ConfigError",
    "DecodeError",
    "DependencyError",
    "SeizNetError",
    "UndefinedMetricError",
    "auc",
    "channel_vote",
    "focal_loss",
    "focal_loss_grad",
    "fpr_per_hour",
    "fuse",
    "generate_recording",
    "run_stage",
    "sensitivity",
    "simulate",
    "specificity",
    "time_vote",
]
