from .metrics import METRICS, MetricsReport, Ratio, TaskResult, compute_metrics, load_results, ratio
from .scoring import action_accuracy, lcs, normalize_action, score_rubrics
from .tasks import Rubric, TaskSpec, load_suite, load_task

__all__ = [
    "METRICS", "MetricsReport", "Ratio", "Rubric", "TaskResult", "TaskSpec", "action_accuracy",
    "compute_metrics", "lcs", "load_results", "load_suite", "load_task", "normalize_action",
    "ratio", "score_rubrics",
]
