"""Knowledge-graph embeddings with relation-specific crossover interactions,
filtered link-prediction evaluation, and path-based explanation search."""

from .graph import (KnowledgeGraph, Split, Triple, add_inverse_relations,
                    build_graph, inverse_relation, load_dataset, load_triples,
                    save_dataset)
from .model import (ModelParams, ScoreMode, init_params, param_count, score,
                    score_all_tails)
from .trainer import TrainConfig, TrainingBag, build_bag, grad, loss, train
from .link_eval import classify_relations, evaluate
from .explainer import (Explanation, PathType, Support, evaluate_explanations,
                        explain_triple, search_paths, similar_entities,
                        similar_relations)
from .vocab import Dictionary

__version__ = "0.1.0"

__all__ = [
    "Dictionary", "Explanation", "KnowledgeGraph", "ModelParams", "PathType",
    "ScoreMode", "Split", "Support", "TrainConfig", "TrainingBag", "Triple",
    "add_inverse_relations", "build_bag", "build_graph", "classify_relations",
    "evaluate", "evaluate_explanations", "explain_triple", "grad",
    "init_params", "inverse_relation", "load_dataset", "load_triples", "loss",
    "param_count", "save_dataset", "score", "score_all_tails", "search_paths",
    "similar_entities", "similar_relations", "train",
]
