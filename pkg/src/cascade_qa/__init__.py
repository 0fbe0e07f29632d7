"""Cascade-ranked multi-document question answering.

Cheap document and paragraph rankers prune candidate text, then a jointly
trained three-headed attention reader extracts the answer span; the final
answer score is the product of the span, document and paragraph scores.
"""

from .corpus import QaExample, SupervisionLabels, distant_label, load_dataset, restructure_paragraphs, tokenize
from .pipeline import CascadePipeline, load_pipeline
from .reader import ReaderConfig, predict_answer

__all__ = [
    "QaExample",
    "SupervisionLabels",
    "distant_label",
    "load_dataset",
    "restructure_paragraphs",
    "tokenize",
    "CascadePipeline",
    "load_pipeline",
    "ReaderConfig",
    "predict_answer",
]

__version__ = "0.1.0"
