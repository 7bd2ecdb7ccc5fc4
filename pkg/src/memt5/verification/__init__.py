"""Independent checks of the attention pattern, gradients, memory flow and cost."""

from memt5.verification.attention_dump import attention_summary, dump_attention, mask_frame
from memt5.verification.gradcheck import LAYER_CASES, MODEL_CASES, gradcheck, run_gradchecks
from memt5.verification.oracles import (
    AttentionCost,
    baseline_reduction_case,
    baseline_reduction_sweep,
    cost_reports,
    cost_sweep,
    count_attention_cost,
    dense_attention_oracle,
    mem_attention_case,
    oracle_sweep,
    selector_oracle,
)
from memt5.verification.probes import reachability_case, reachability_probe, reachability_sweep
from memt5.verification.report import OracleReport, compare, reports_frame, write_reports
from memt5.verification.suite import (
    REPORTS_FILENAME,
    run_gradcheck_suite,
    run_verification_suite,
)

__all__ = [
    "LAYER_CASES",
    "MODEL_CASES",
    "REPORTS_FILENAME",
    "AttentionCost",
    "OracleReport",
    "attention_summary",
    "baseline_reduction_case",
    "baseline_reduction_sweep",
    "compare",
    "cost_reports",
    "cost_sweep",
    "count_attention_cost",
    "dense_attention_oracle",
    "dump_attention",
    "gradcheck",
    "mem_attention_case",
    "mask_frame",
    "oracle_sweep",
    "reachability_case",
    "reachability_probe",
    "reachability_sweep",
    "reports_frame",
    "run_gradcheck_suite",
    "run_gradchecks",
    "run_verification_suite",
    "selector_oracle",
    "write_reports",
]
