"""Pairwise LLM evaluation with aspect decomposition and weighted aggregation."""

try:
    from . import _dnaeval as _core
except ImportError:
    import _dnaeval as _core

Error = _core.Error
Dataset = _core.Dataset
RunResult = _core.RunResult

normalize_weights = _core.normalize_weights
decide = _core.decide
evaluate_pair = _core.evaluate_pair
parse_weights = _core.parse_weights
parse_pair_scores = _core.parse_pair_scores
parse_aspects = _core.parse_aspects
agreement = _core.agreement
agreement_cell = _core.agreement_cell
weights_to_ranking = _core.weights_to_ranking
kendall_distance = _core.kendall_distance
import_benchmark = _core.import_benchmark
run_mock = _core.run_mock
estimate_cost = _core.estimate_cost
run_cli = _core.run_cli

TIE, FIRST, SECOND = 0, 1, 2

__all__ = [
    "Error", "Dataset", "RunResult", "normalize_weights", "decide", "evaluate_pair", "parse_weights",
    "parse_pair_scores", "parse_aspects", "agreement", "agreement_cell", "weights_to_ranking",
    "kendall_distance", "import_benchmark", "run_mock", "estimate_cost", "run_cli", "TIE", "FIRST", "SECOND",
]
