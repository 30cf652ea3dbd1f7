from .files import dump_space, load_space, parse_space, write_results
from .search import (
    KITTI_CONSTRAINTS,
    NYU_CONSTRAINTS,
    Candidate,
    Evaluation,
    ExplorerConfig,
    IndicatorConstraints,
    SearchResult,
    TOY_CONSTRAINTS,
    SpaceTooLarge,
    brute_force_oracle,
    evaluate_candidate,
    indicator,
    proxy_accuracy,
    search,
)
from .space import SearchSpace, mutate, sample
