from .latency import (
    DEFAULT_LEVELS,
    LatencyLevelReport,
    LatencyReport,
    engine_search_runner,
    index_search_runner,
    latency_bench,
)
from .mcqa import (
    ContainmentOracleAnswerer,
    EvalRun,
    FixedAnswerer,
    MCQAItem,
    generate_mcqa_items,
    majority_vote,
    read_items,
    run_mcqa,
    sweep_mcqa,
    write_items,
)
from .stats import (
    AbstractionRecord,
    BootstrapResult,
    DegenerateAgreementError,
    bootstrap_agreement_diff,
    cohens_kappa,
    fleiss_kappa,
    krippendorff_alpha,
    mann_whitney_u,
    wilson_ci,
)

__all__ = [
    "DEFAULT_LEVELS",
    "LatencyLevelReport",
    "LatencyReport",
    "engine_search_runner",
    "index_search_runner",
    "latency_bench",
    "ContainmentOracleAnswerer",
    "EvalRun",
    "FixedAnswerer",
    "MCQAItem",
    "generate_mcqa_items",
    "majority_vote",
    "read_items",
    "run_mcqa",
    "sweep_mcqa",
    "write_items",
    "AbstractionRecord",
    "BootstrapResult",
    "DegenerateAgreementError",
    "bootstrap_agreement_diff",
    "cohens_kappa",
    "fleiss_kappa",
    "krippendorff_alpha",
    "mann_whitney_u",
    "wilson_ci",
]
