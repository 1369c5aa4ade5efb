from .evaluator import evaluate
from .tokenizer import tokenize

__all__ = ["evaluate", "tokenize"]
