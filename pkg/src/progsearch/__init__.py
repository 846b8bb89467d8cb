"""Heuristic search over typed module programs.

Programs are trees of typed modules; the searcher explores the graph of
programs connected by single edits, guided by evaluation scores, learned
token statistics, and an exploration bonus.  A discrete object micro-world
supplies executable semantics and generated datasets, and a tabular
policy-gradient sampler serves as the efficiency baseline.
"""

from .microworld import (
    QuestionTriplet,
    Scene,
    SceneObject,
    Value,
    accuracy,
    exact_match_oracle,
    execute,
    gen_dataset,
)
from .programs import (
    Program,
    brute_force_distance,
    canonical_key,
    from_sequence,
    mutate,
    to_sequence,
)
from .registry import (
    LegalityReport,
    ModuleRegistry,
    ModuleSig,
    count_mismatches,
    legality_check,
    load_registry,
)
from .search import SearchConfig, SearchTrace, run_search
from .training import LoopConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "LegalityReport",
    "LoopConfig",
    "ModuleRegistry",
    "ModuleSig",
    "Program",
    "QuestionTriplet",
    "Scene",
    "SceneObject",
    "SearchConfig",
    "SearchTrace",
    "Value",
    "accuracy",
    "brute_force_distance",
    "canonical_key",
    "count_mismatches",
    "exact_match_oracle",
    "execute",
    "from_sequence",
    "gen_dataset",
    "legality_check",
    "load_registry",
    "mutate",
    "run_search",
    "run_training",
    "to_sequence",
    "__version__",
]
