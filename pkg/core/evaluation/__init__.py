"""Evaluation harness and reports."""

from core.evaluation.evaluator import (
    evaluate_asr,
    evaluate_cloning,
    evaluate_model,
    flatten_metrics,
    pick_reference,
)
from core.evaluation.report import ReportGenerator

__all__ = ["evaluate_asr", "evaluate_cloning", "evaluate_model", "flatten_metrics", "pick_reference",
           "ReportGenerator"]
