"""Language, mutual-information, diversity and relevance evaluation."""

from .diversity import diversity_inventiveness, diversity_strength
from .language import bleu_n, cider
from .probe import ProbeConfig, ProbeResult, extract_codes, probe_accuracy
from .relevance import relevance_from_questions, relevance_rates
from .report import evaluate_checkpoint, probe_space

__all__ = [
    "bleu_n", "cider", "diversity_strength", "diversity_inventiveness", "ProbeConfig",
    "ProbeResult", "extract_codes", "probe_accuracy", "relevance_from_questions",
    "relevance_rates", "evaluate_checkpoint", "probe_space",
]
