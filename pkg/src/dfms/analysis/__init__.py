"""
Analysis package for dfms.

Contains the evaluation kit and visualization tools.
"""

from dfms.analysis.metrics import (
    ClassHistogram,
    QueryBoundParams,
    agreement,
    class_histogram,
    clone_accuracy,
    emit_curves,
    normalized_entropy,
    per_class_accuracy,
    predict_labels,
    query_bound,
)
from dfms.analysis.visualizer import RunVisualizer

__all__ = [
    "ClassHistogram",
    "QueryBoundParams",
    "agreement",
    "class_histogram",
    "clone_accuracy",
    "emit_curves",
    "normalized_entropy",
    "per_class_accuracy",
    "predict_labels",
    "query_bound",
    "RunVisualizer",
]
