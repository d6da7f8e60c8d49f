"""alphaloom: market-logic-driven alpha factor mining.

Evaluates factor expressions from a fixed DSL over OHLCV panels,
compiles structured market logic into generation constraints, backtests
candidates under a cost-aware top-k/dropout protocol, and runs the two
nested optimization loops over a pluggable agent backend.
"""

from .backtest import (
    BacktestReport,
    StrategyConfig,
    ar_ir_mdd,
    daily_ic,
    run_backtest,
    run_test_backtest,
    simulate_topk,
    summarize_ic,
)
from .dsl import FactorExpr, evaluate, list_operators, parse, required_lookback, unparse
from .kernels import BACKEND as KERNEL_BACKEND
from .logic import (
    CheckReport,
    ConstraintSet,
    MarketLogic,
    MarketLogicStruct,
    Predicate,
    Prediction,
    canonicalize_fields,
    check,
    compile_constraints,
)
from .loops import (
    LoopSettings,
    Objective,
    PipelineEngine,
    RunStore,
    final_evaluation,
    inner_loop,
    outer_loop,
    start_outer_state,
)
from .panel import (
    Panel,
    ReturnPanel,
    SplitSpec,
    cross_sectional_zscore,
    export_csv,
    filter_universe,
    forward_returns,
    ingest_csv,
)
from .scoring import FeatureBlock, ScoreModel, base_factors, fit, predict

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "CheckReport",
    "ConstraintSet",
    "FactorExpr",
    "FeatureBlock",
    "KERNEL_BACKEND",
    "LoopSettings",
    "MarketLogic",
    "MarketLogicStruct",
    "Objective",
    "Panel",
    "PipelineEngine",
    "Predicate",
    "Prediction",
    "ReturnPanel",
    "RunStore",
    "ScoreModel",
    "SplitSpec",
    "StrategyConfig",
    "ar_ir_mdd",
    "base_factors",
    "canonicalize_fields",
    "check",
    "compile_constraints",
    "cross_sectional_zscore",
    "daily_ic",
    "evaluate",
    "export_csv",
    "filter_universe",
    "final_evaluation",
    "fit",
    "forward_returns",
    "ingest_csv",
    "inner_loop",
    "list_operators",
    "outer_loop",
    "parse",
    "predict",
    "required_lookback",
    "run_backtest",
    "run_test_backtest",
    "simulate_topk",
    "start_outer_state",
    "summarize_ic",
    "unparse",
]
